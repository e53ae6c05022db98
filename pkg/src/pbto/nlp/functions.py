"""Traced (JAX) evaluation of costs and constraints.

Everything here is a pure function of the flat decision vector ``z``, the
chart base ``R_bar`` and a parameter pytree, so one compiled function serves
every scenario that shares the same dimensions and terrain structure.
Derivatives are exact forward-mode derivatives of these expressions.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402
import scipy.linalg  # noqa: E402

from ..bezier import second_diff_matrix  # noqa: E402
from .layout import Dimensions, IndexMap, ProblemMode  # noqa: E402

SMALL2 = 1e-14
INACTIVE = -1.0  # residual reported by masked-out inequality rows


# --- small traced helpers ---------------------------------------------------------


def bern(n, s):
    """Bernstein basis of degree ``n`` at ``s``: shape ``s.shape + (n+1,)``."""
    return jnp.stack([comb(n, k) * s**k * (1.0 - s) ** (n - k) for k in range(n + 1)], axis=-1)


def hat(v):
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = jnp.zeros_like(x)
    return jnp.stack([jnp.stack([o, -z, y], -1), jnp.stack([z, o, -x], -1), jnp.stack([-y, x, o], -1)], -2)


def exp_so3(phi):
    t2 = jnp.sum(phi * phi, axis=-1)
    small = t2 < SMALL2
    safe = jnp.where(small, 1.0, t2)
    th = jnp.sqrt(safe)
    a = jnp.where(small, 1.0 - t2 / 6.0, jnp.sin(th) / th)
    b = jnp.where(small, 0.5 - t2 / 24.0, (1.0 - jnp.cos(th)) / safe)
    K = hat(phi)
    eye = jnp.broadcast_to(jnp.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log_so3(R):
    v = 0.5 * jnp.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    s2 = jnp.sum(v * v, axis=-1)
    c = 0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0)
    small = s2 < SMALL2
    s = jnp.sqrt(jnp.where(small, 1.0, s2))
    theta = jnp.arctan2(s, c)
    factor = jnp.where(small, 1.0 + s2 / 6.0, theta / s)
    return factor[..., None] * v


def mT(A):
    return jnp.swapaxes(A, -1, -2)


def terrain_height(kind, n_steps, tp, x, y):
    if kind == "plane":
        return 0.0 * x
    if kind == "block":
        return jnp.where(x >= tp["step_x"], tp["step_height"], 0.0) + 0.0 * y
    if kind == "stairs":
        z = 0.0 * x + 0.0 * y
        for j in range(n_steps):
            z = z + jnp.where(x >= tp["step_x"] + j * tp["step_length"], tp["step_height"], 0.0)
        return z
    if kind == "chimney":
        return tp["tan_incline"] * jnp.maximum(jnp.abs(y) - tp["half_gap"], 0.0) + 0.0 * x
    h = tp["heights"]
    nx, ny = h.shape
    u = jnp.clip((x - tp["origin"][0]) / tp["resolution"], 0.0, nx - 1.0)
    v = jnp.clip((y - tp["origin"][1]) / tp["resolution"], 0.0, ny - 1.0)
    i = jnp.clip(jnp.floor(u), 0, nx - 2).astype(jnp.int32)
    j = jnp.clip(jnp.floor(v), 0, ny - 2).astype(jnp.int32)
    a, b = u - i, v - j
    return ((1 - a) * (1 - b) * h[i, j] + a * (1 - b) * h[i + 1, j]
            + (1 - a) * b * h[i, j + 1] + a * b * h[i + 1, j + 1])


# --- block catalogue ----------------------------------------------------------------

COST_BLOCKS = ("h1", "h2", "h3", "h4", "h5", "h6")


def eq_block_shapes(d: Dimensions):
    L, K = d.n_legs, d.n_nodes
    blocks = [("duration_sum", (L,))]
    if d.n_swing:
        blocks += [("initial_foothold", (L, 3))]
        if d.n_swing > 1:
            blocks += [("foothold_junction", (L, d.n_swing - 1, 3))]
        blocks += [("foothold_terrain", (L, d.n_stance - 1))]
    if d.mode == ProblemMode.PROPOSED:
        blocks += [("continuity", (L, d.n_phase, 6))]
    else:
        blocks += [("initial_position", (3,)), ("initial_velocity", (3,)), ("translational_dynamics", (K, 3))]
    blocks += [("final_position", (3,)), ("final_velocity", (3,)),
               ("initial_orientation", (3,)), ("initial_angular_velocity", (3,)),
               ("final_orientation", (3,)), ("final_angular_velocity", (3,)),
               ("orientation_dynamics", (K - 1, 3)), ("angular_velocity_dynamics", (K - 1, 3))]
    return blocks


def ineq_block_shapes(d: Dimensions):
    L, K = d.n_legs, d.n_nodes
    if d.mode == ProblemMode.PROPOSED:
        blocks = [("friction", (L, d.n_stance, d.degree_force + 1, 6))]
    else:
        blocks = [("friction_nodes", (L, K, 6))]
    return blocks + [("non_penetration", (L, K)), ("leg_length", (L, K)), ("min_duration", (L, d.n_phase))]


def cost_block_shapes(d: Dimensions):
    L, K = d.n_legs, d.n_nodes
    N = d.degree_feet
    return [("h1", (K,)), ("h2", (K, 3)), ("h3", (K, 3)), ("h4", (K, L, 3)),
            ("h5", (L, d.n_swing, N - 1, 3)), ("h6", (L, d.n_swing, N, 3))]


# --- the model ---------------------------------------------------------------------


def _friction_rows(frames, mu, fmax, f):
    """Pyramid residuals for forces ``f[..., 3]`` with per-leg frames broadcast in."""
    n, t1, t2 = frames[..., 0, :], frames[..., 1, :], frames[..., 2, :]
    fn = jnp.sum(f * n, -1)
    ft1 = jnp.sum(f * t1, -1)
    ft2 = jnp.sum(f * t2, -1)
    return jnp.stack([ft1 - mu * fn, -ft1 - mu * fn, ft2 - mu * fn, -ft2 - mu * fn, fn - fmax, -fn], -1)


def build(d: Dimensions, kind: str, n_steps: int):
    """Return ``evaluate(z, R_bar, P) -> dict`` of named blocks."""
    imap = IndexMap(d)
    L, K, n_ph = d.n_legs, d.n_nodes, d.n_phase
    n_st, n_sw = d.n_stance, d.n_swing
    N, M = d.degree_feet, d.degree_force
    proposed = d.mode == ProblemMode.PROPOSED
    lu_unit = scipy.linalg.lu_factor(second_diff_matrix(M + 2, 1.0).entries)
    lu_unit = (jnp.asarray(lu_unit[0]), jnp.asarray(lu_unit[1]))

    def unpack(z):
        return {name: z[imap.slice(name)].reshape(shape) for name, shape in imap.shapes.items()}

    def leg_eval(alpha, gamma, dT, chi, chid, fh, t, mass):
        sig_end = jnp.cumsum(dT)
        sig_start = sig_end - dT
        q = jnp.clip(jnp.sum(t[:, None] >= jax.lax.stop_gradient(sig_end)[None, :], axis=1), 0, n_ph - 1)
        onehot = jnp.arange(n_ph)[None, :] == q[:, None]
        s = jnp.where(onehot, (t[:, None] - sig_start[None, :]) / dT[None, :], 0.5)
        st = onehot[:, 0::2].astype(z_dtype)
        s_st = s[:, 0::2]
        f = jnp.einsum("tj,tjc,jcd->td", st, bern(M, s_st), alpha)
        p = st @ fh
        if n_sw:
            sw = onehot[:, 1::2].astype(z_dtype)
            p = p + jnp.einsum("tj,tjc,jcd->td", sw, bern(N, s[:, 1::2]), gamma)
        out = dict(p=p, f=f, stance=onehot[:, 0::2].any(axis=1))
        if not proposed:
            return out
        dT_st = dT[0::2]
        rhs = jnp.concatenate([alpha * (dT_st**2 / mass)[:, None, None], (chid[0::2] * dT_st[:, None])[:, None],
                               chi[0::2][:, None]], axis=1)
        beta = jax.scipy.linalg.lu_solve(lu_unit, jnp.transpose(rhs, (1, 0, 2)).reshape(M + 3, -1))
        beta = jnp.transpose(beta.reshape(M + 3, n_st, 3), (1, 0, 2))
        dbeta = (M + 2) * (beta[:, 1:] - beta[:, :-1]) / dT_st[:, None, None]
        xp = jnp.einsum("tj,tjc,jcd->td", st, bern(M + 2, s_st), beta)
        vp = jnp.einsum("tj,tjc,jcd->td", st, bern(M + 1, s_st), dbeta)
        end_pos = jnp.zeros((n_ph, 3)).at[0::2].set(beta[:, -1])
        end_vel = jnp.zeros((n_ph, 3)).at[0::2].set(dbeta[:, -1])
        if n_sw:
            tau = t[:, None] - sig_start[1::2][None, :]
            xp = xp + jnp.einsum("tj,tjd->td", sw, chi[1::2][None] + chid[1::2][None] * tau[..., None])
            vp = vp + sw @ chid[1::2]
            end_pos = end_pos.at[1::2].set(chi[1::2] + chid[1::2] * dT[1::2, None])
            end_vel = end_vel.at[1::2].set(chid[1::2])
        cont = jnp.concatenate([
            jnp.concatenate([chi[:1], chid[:1]], axis=1),
            jnp.concatenate([end_pos[:-1] - chi[1:], end_vel[:-1] - chid[1:]], axis=1)], axis=0)
        out.update(xp=xp, vp=vp, continuity=cont)
        return out

    z_dtype = jnp.float64

    def evaluate(z, R_bar, P):
        v = unpack(z)
        t = P["t_nodes"]
        mass, g = P["mass"], P["g"]
        alpha, gamma, dT = v["alpha"], v["gamma"], v["durations"]
        if n_sw:
            fh = jnp.concatenate([gamma[:, :, 0], gamma[:, -1:, N]], axis=1)
        else:
            fh = P["p_init"][:, None, :]
        chi = v.get("chi", jnp.zeros((L, n_ph, 3)))
        chid = v.get("chi_dot", jnp.zeros((L, n_ph, 3)))
        legs = jax.vmap(leg_eval, in_axes=(0, 0, 0, 0, 0, 0, None, None))(alpha, gamma, dT, chi, chid, fh, t, mass)
        p, f, stance = legs["p"], legs["f"], legs["stance"]  # (L, K, 3), (L, K, 3), (L, K)

        if proposed:
            x = P["x_init"] + P["v_init"] * t[:, None] + 0.5 * g * t[:, None] ** 2 + legs["xp"].sum(0)
            xd = P["v_init"] + g * t[:, None] + legs["vp"].sum(0)
        else:
            x, xd = v["x_nodes"], v["v_nodes"]

        R = R_bar @ exp_so3(v["dtheta"])
        w = v["omega"]
        dt = P["dt"]
        arm = p - x[None]
        torque = jnp.cross(arm, f).sum(0)  # (K, 3)
        I = P["inertia"]
        Iw = w @ I.T
        body_torque = jnp.einsum("kji,kj->ki", R[:-1], torque[:-1]) - jnp.cross(w[:-1], Iw[:-1])
        w_def = w[1:] - w[:-1] - dt * body_torque @ P["inertia_inv"].T
        R_def = log_so3(mT(R[1:]) @ R[:-1] @ exp_so3(w[:-1] * dt))
        rel = jnp.einsum("kji,lkj->kli", R, arm)  # body-frame foot positions (K, L, 3)

        out = {}
        # costs
        out["h1"] = x[:, 2] - P["z_ref"]
        out["h2"] = log_so3(mT(P["R_ref"]) @ R)
        out["h3"] = w
        out["h4"] = rel - P["p_ref"][None]
        out["h5"] = gamma[:, :, 2:] - 2 * gamma[:, :, 1:-1] + gamma[:, :, :-2]
        out["h6"] = gamma[:, :, 1:] - gamma[:, :, :-1]

        # equalities
        out["duration_sum"] = dT.sum(1) - P["T_total"]
        tp = P["terrain"]
        if n_sw:
            out["initial_foothold"] = gamma[:, 0, 0] - P["p_init"]
            if n_sw > 1:
                out["foothold_junction"] = gamma[:, 1:, 0] - gamma[:, :-1, N]
            later = fh[:, 1:]
            out["foothold_terrain"] = later[..., 2] - terrain_height(kind, n_steps, tp, later[..., 0], later[..., 1])
        if proposed:
            out["continuity"] = legs["continuity"]
        else:
            h = dt
            dx = x[1:] - x[:-1]
            a_start = (6 * dx - 2 * h * (2 * xd[:-1] + xd[1:])) / h**2
            a_end = (-6 * dx[-1] + 2 * h * (xd[-2] + 2 * xd[-1])) / h**2
            acc = jnp.concatenate([a_start, a_end[None]], axis=0)
            out["initial_position"] = x[0] - P["x_init"]
            out["initial_velocity"] = xd[0] - P["v_init"]
            out["translational_dynamics"] = mass * acc - mass * g - f.sum(0)
        out["final_position"] = x[-1] - P["x_final"]
        out["final_velocity"] = xd[-1] - P["v_final"]
        out["initial_orientation"] = log_so3(P["R_init"].T @ R[0])
        out["initial_angular_velocity"] = w[0] - P["w_init"]
        out["final_orientation"] = log_so3(P["R_final"].T @ R[-1])
        out["final_angular_velocity"] = w[-1] - P["w_final"]
        out["orientation_dynamics"] = R_def
        out["angular_velocity_dynamics"] = w_def

        # inequalities
        frames = P["frames"]  # (L, 3, 3) rows n, t1, t2
        if proposed:
            out["friction"] = _friction_rows(frames[:, None, None], P["mu"], P["fmax"], alpha)
        else:
            rows = _friction_rows(frames[:, None], P["mu"], P["fmax"], f)
            out["friction_nodes"] = jnp.where(stance[..., None], rows, INACTIVE)
        pen = terrain_height(kind, n_steps, tp, p[..., 0], p[..., 1]) - p[..., 2]
        out["non_penetration"] = jnp.where(stance, INACTIVE, pen)
        hip = rel - P["hips"][None]
        out["leg_length"] = jnp.transpose(jnp.sqrt(jnp.sum(hip * hip, -1))) - P["leg_length"]
        out["min_duration"] = P["dt_min"] - dT
        return out

    return evaluate


@lru_cache(maxsize=32)
def compiled(d: Dimensions, kind: str, n_steps: int):
    """Jitted ``(values, value_and_jacobian)`` for the stacked block vector.

    The stacked order is costs (weighted), equalities, inequalities.
    """
    evaluate = build(d, kind, n_steps)
    cost_names = [n for n, _ in cost_block_shapes(d)]
    eq_names = [n for n, _ in eq_block_shapes(d)]
    in_names = [n for n, _ in ineq_block_shapes(d)]

    def stacked(z, R_bar, P):
        out = evaluate(z, R_bar, P)
        sw = P["sqrt_w"]
        parts = [sw[i] * out[n].reshape(-1) for i, n in enumerate(cost_names)]
        parts += [out[n].reshape(-1) for n in eq_names]
        parts += [out[n].reshape(-1) for n in in_names]
        return jnp.concatenate(parts)

    values = jax.jit(stacked)

    def with_jac(z, R_bar, P):
        jac, val = jax.jacfwd(lambda zz: (stacked(zz, R_bar, P), stacked(zz, R_bar, P)), has_aux=True)(z)
        return val, jac

    return values, jax.jit(with_jac), jax.jit(evaluate)
