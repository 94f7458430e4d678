"""Discrete interior-point iteration chi <- chi + eta(t, chi).

Used as the minimizer oracle for accuracy metrics, for the KKT diagnostics,
and in stacked (trajectory-level) form to check instant/trajectory
equivalence.
"""
from dataclasses import dataclass, field

import numpy as np

from .barrier import BarrierConfig
from .controller import _solve_input, assemble_rR, eta, eta_direct, eta_parts
from . import _kernels
from .errors import MaxIterationsExceeded, NonFiniteEvaluation, OedError
from .linalg import solve_spd
from .problem import EvalBundle, ProblemDef, eval_bundle

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
RATE_WINDOW = 1e-3
# ratios with a denominator below this are round-off, not contraction
RATE_FLOOR = 1e-11
# damped flow used by the safeguarded solver once Newton stalls
FLOW_ALPHA = 0.02
FLOW_EXIT = 1e-6
FLOW_BUDGET = 20000
FLOW_CHUNK = 100
# safeguarded solves give up once the best residual has not halved for this
# many Newton iterations (a kink of eta on a constraint boundary has no root)
STALL_ITER = 25
RESYNC_STRIDE = 20
BACKTRACK_HALVINGS = 16


@dataclass
class SolveReport:
    chi_star: np.ndarray
    iterations: int
    final_eta_norm: float
    converged: bool
    rate_samples: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)
    jacobian: object = field(default=None, repr=False)
    flow_steps: int = 0


@dataclass(frozen=True)
class LagrangeMultiplier:
    zeta: np.ndarray


def ip_step(p: ProblemDef, cfg: BarrierConfig, t, chi):
    b = eval_bundle(p, t, chi)
    return b.x + eta(b, assemble_rR(b, cfg))


def contraction_ratios(history, chi_star, window=RATE_WINDOW, floor=RATE_FLOOR):
    """||chi[k+1] - chi*|| / ||chi[k] - chi*|| for iterates inside ``window``."""
    errs = [float(np.linalg.norm(np.asarray(h) - chi_star)) for h in history]
    scale = 1.0 + float(np.linalg.norm(chi_star))
    out = []
    for e0, e1 in zip(errs[:-1], errs[1:]):
        if floor * scale < e0 < window and e1 > 0.0:
            out.append(e1 / e0)
    return out


def _eta_at(p, cfg, t, chi, checked=False):
    # unchecked evaluation first; a non-finite result is redone with checks
    # so the error names the evaluator
    if not checked and np.isfinite(chi).all():
        b = eval_bundle(p, t, chi, checked=False, dynamics=False)
        out = eta_direct(b, cfg)
        if np.isfinite(out).all():
            return out
    b = eval_bundle(p, t, chi)
    out = eta(b, assemble_rR(b, cfg))
    if not np.isfinite(out).all():
        raise NonFiniteEvaluation("eta")
    return out


def _lin_solve(J, rhs):
    d, info = _kernels.lu_solve(np.ascontiguousarray(J), np.ascontiguousarray(rhs))
    if info >= 0:
        raise np.linalg.LinAlgError("singular Jacobian")
    return d


def _eta_jacobian(p, cfg, t, chi, step=1e-7):
    cols = []
    for i in range(chi.size):
        e = np.zeros_like(chi)
        e[i] = step * (1.0 + abs(chi[i]))
        cols.append((_eta_at(p, cfg, t, chi + e) - _eta_at(p, cfg, t, chi - e)) / (2.0 * e[i]))
    return np.stack(cols, axis=1)


def _backtrack(p, cfg, t, chi, step, J):
    """Backtracking Newton step on eta(chi) = 0; None when no decrease is found."""
    norm0 = float(np.max(np.abs(step)))
    try:
        d = _lin_solve(J, -step)
    except np.linalg.LinAlgError:
        return None
    alpha = 1.0
    for _ in range(BACKTRACK_HALVINGS):
        cand = chi + alpha * d
        try:
            nxt = _eta_at(p, cfg, t, cand)
        except OedError:
            nxt = None
        if nxt is not None and float(np.max(np.abs(nxt))) < norm0:
            return cand
        alpha *= 0.5
    return None


def _flow(p, cfg, t, chi, step, budget, exit_norm=FLOW_EXIT):
    """Fixed damped steps chi <- chi + alpha * eta, a forward-Euler discretization
    of the frozen closed-loop flow, until ||eta|| < exit_norm or ``budget`` steps.

    Steps are not screened for descent: across an activating constraint eta is
    discontinuous and the flow may chatter along the boundary before it moves
    on, just as the closed loop does. Returns (chi, step, steps used).
    """
    alpha = FLOW_ALPHA
    used = 0
    while used < budget and float(np.max(np.abs(step))) >= exit_norm and alpha > 1e-8:
        cand = chi + alpha * step
        used += 1
        try:
            nxt = _eta_at(p, cfg, t, cand)
        except OedError:
            alpha *= 0.5
            continue
        chi, step = cand, nxt
    return chi, step, used


def solve_instant(p: ProblemDef, cfg: BarrierConfig, t, chi0, tol=DEFAULT_TOL,
                  max_iter=DEFAULT_MAX_ITER, raise_on_fail=True, keep_history=True,
                  method="fixed_point", jacobian=None, flow_budget=FLOW_BUDGET):
    """Iterate from ``chi0`` until ||eta||_inf <= tol.

    ``method="fixed_point"`` is the plain iteration chi <- chi + eta.

    ``method="safeguarded"`` has the same fixed points but also reaches
    minimizers where the plain iteration is locally repelling. It takes plain
    steps until ||eta|| grows, then Newton steps on eta(chi) = 0. The Newton
    Jacobian is a finite-difference one, kept current by Broyden updates and
    refreshed, with backtracking, whenever a step fails to halve ||eta||. When
    backtracking finds no decrease (a minimizer branch has ended), damped steps
    follow the closed-loop flow towards the next minimizer in chunks, with
    Newton tried again after each chunk, for at most ``flow_budget`` flow
    evaluations in total. Newton also hands over to a flow chunk, or gives up
    once the budget is spent, when the best ||eta|| has not halved for
    ``STALL_ITER`` iterations. A ``jacobian``
    from a nearby solve starts the Newton phase at once; the one in use is
    returned in the report.

    ``rate_samples`` holds the last five contraction ratios measured against the
    converged point. On failure :class:`MaxIterationsExceeded` carries the
    report (best iterate included) unless ``raise_on_fail`` is False.
    """
    if tol < 1e-14:
        raise ValueError("tol must be at least 1e-14")
    if method not in ("fixed_point", "safeguarded"):
        raise ValueError(f"unknown method {method!r}")
    chi = np.array(chi0, dtype=float)
    history = [chi.copy()]
    best, best_norm = chi.copy(), np.inf
    eta_norm = np.inf
    J = None if jacobian is None else np.asarray(jacobian, dtype=float)
    newton = method == "safeguarded" and J is not None
    prev = None
    flows = 0
    k = 0
    stall_ref, stall_k = np.inf, 0
    while True:
        step = _eta_at(p, cfg, t, chi, checked=k == 0)
        prev_norm = eta_norm
        eta_norm = float(np.max(np.abs(step)))
        if eta_norm < best_norm:
            best, best_norm = chi.copy(), eta_norm
        if eta_norm <= tol or k >= max_iter:
            break
        if best_norm <= 0.5 * stall_ref:
            stall_ref, stall_k = best_norm, k
        elif newton and k - stall_k > STALL_ITER:
            if flows >= flow_budget:
                break
            chi, step, used = _flow(p, cfg, t, best.copy(), _eta_at(p, cfg, t, best),
                                    min(FLOW_CHUNK, flow_budget - flows))
            flows += used
            J, prev = None, None
            best_norm = np.inf
            stall_ref, stall_k = np.inf, k
            eta_norm = float(np.max(np.abs(step)))
            k += 1
            if keep_history:
                history.append(chi.copy())
            continue
        if method == "safeguarded" and not newton and eta_norm >= prev_norm:
            newton = True
            chi, eta_norm = best.copy(), best_norm
            step = _eta_at(p, cfg, t, chi)
            prev = None
        if not newton:
            chi = chi + step
        elif prev is None or eta_norm <= 0.5 * prev_norm:
            if prev is not None:
                # Broyden update keeps the Jacobian current between refreshes
                dx, df = chi - prev[0], step - prev[1]
                J = J + np.outer(df - J @ dx, dx) / float(dx @ dx)
            if J is None:
                J = _eta_jacobian(p, cfg, t, chi)
            try:
                d = _lin_solve(J, -step)
            except np.linalg.LinAlgError:
                J = _eta_jacobian(p, cfg, t, chi)
                d = np.linalg.lstsq(J, -step, rcond=None)[0]
            prev = (chi, step, eta_norm)
            chi = chi + d
        else:
            # the last step did not pay off: go back, refresh, backtrack
            chi, step, eta_norm = prev
            prev = None
            J = _eta_jacobian(p, cfg, t, chi)
            nxt = _backtrack(p, cfg, t, chi, step, J)
            if nxt is not None:
                chi = nxt
            elif flows < flow_budget:
                chi, step, used = _flow(p, cfg, t, chi, step,
                                        min(FLOW_CHUNK, flow_budget - flows))
                flows += used
                J = None
                best_norm = np.inf  # the flow may leave the old basin for good
                stall_ref, stall_k = np.inf, k
            else:
                break
        k += 1
        if keep_history:
            history.append(chi.copy())
    converged = eta_norm <= tol
    chi_star = chi if converged else best
    report = SolveReport(
        chi_star=chi_star,
        iterations=k,
        final_eta_norm=eta_norm if converged else best_norm,
        converged=converged,
        rate_samples=contraction_ratios(history, chi_star)[-5:] if keep_history else [],
        history=history if keep_history else [],
        jacobian=J,
        flow_steps=flows,
    )
    if not converged and raise_on_fail:
        raise MaxIterationsExceeded(report)
    return report


def lagrange_multiplier(p: ProblemDef, cfg: BarrierConfig, t, chi) -> LagrangeMultiplier:
    """zeta = (H R^-1 H^T)^-1 (ybar - h + H R^-1 r)."""
    b = eval_bundle(p, t, chi)
    aug = assemble_rR(b, cfg)
    _, wp = eta_parts(b, aug)
    rhs = b.ybar - b.h + b.H @ solve_spd(aug.R_factor, aug.r)
    return LagrangeMultiplier(zeta=solve_spd(wp.S_factor, rhs))


def kkt_residual(p: ProblemDef, cfg: BarrierConfig, t, chi, zeta) -> float:
    """||[r - H^T zeta; ybar - h]||_inf."""
    z = zeta.zeta if isinstance(zeta, LagrangeMultiplier) else np.asarray(zeta, dtype=float)
    b = eval_bundle(p, t, chi)
    aug = assemble_rR(b, cfg)
    lam = np.concatenate([aug.r - b.H.T @ z, b.ybar - b.h])
    return float(np.max(np.abs(lam)))


def _stacked_dense_step(bundles, augs):
    # independent route: assemble the block-diagonal program and solve densely
    n = bundles[0].x.size
    m = bundles[0].h.size
    N = len(bundles)
    R = np.zeros((N * n, N * n))
    Hs = np.zeros((N * m, N * n))
    r = np.concatenate([a.r for a in augs])
    err = np.concatenate([b.ybar - b.h for b in bundles])
    for k, (b, a) in enumerate(zip(bundles, augs)):
        R[k * n:(k + 1) * n, k * n:(k + 1) * n] = a.R
        Hs[k * m:(k + 1) * m, k * n:(k + 1) * n] = b.H
    Rinv_Ht = np.linalg.solve(R, Hs.T)
    pinv = Rinv_Ht @ np.linalg.inv(Hs @ Rinv_Ht)
    Rinv_r = np.linalg.solve(R, r)
    return pinv @ err - (Rinv_r - pinv @ (Hs @ Rinv_r))


def stacked_ip_step(p: ProblemDef, cfg: BarrierConfig, sample_times, phi, assemble="blockwise"):
    """One interior-point step on the stacked trajectory program.

    ``phi`` stacks N states (one per sample time). The stacked weighted
    pseudoinverse is block diagonal, so the default route steps each block
    independently; ``assemble="dense"`` builds the full block-diagonal
    matrices instead.
    """
    times = list(sample_times)
    N = len(times)
    if N < 1:
        raise ValueError("need at least one sample time")
    phi = np.asarray(phi, dtype=float).reshape(N, p.d_x)
    if assemble == "blockwise":
        return np.concatenate([ip_step(p, cfg, t, chi) for t, chi in zip(times, phi)])
    if assemble != "dense":
        raise ValueError(f"unknown assembly {assemble!r}")
    bundles = [eval_bundle(p, t, chi) for t, chi in zip(times, phi)]
    augs = [assemble_rR(b, cfg) for b in bundles]
    return phi.reshape(-1) + _stacked_dense_step(bundles, augs)


def solve_stacked(p, cfg, sample_times, phi0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                  assemble="blockwise"):
    """Iterate stacked_ip_step until the stacked step is below ``tol``."""
    phi = np.asarray(phi0, dtype=float).reshape(-1)
    for k in range(max_iter + 1):
        nxt = stacked_ip_step(p, cfg, sample_times, phi, assemble=assemble)
        size = float(np.max(np.abs(nxt - phi)))
        if size <= tol:
            return phi, k
        phi = nxt
    raise MaxIterationsExceeded(SolveReport(phi, max_iter, size, False))


@dataclass
class ReferenceTrajectory:
    times: np.ndarray
    chi: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    jump_flags: np.ndarray
    # 0 warm start, 1 fallback after a failed warm start, 2 resynchronized, -1 failed
    source: np.ndarray = None

    def jump_windows(self, half_width=0.05):
        """Merged (start, end) windows of +/- half_width around flagged samples."""
        windows = []
        for t in self.times[self.jump_flags]:
            lo, hi = t - half_width, t + half_width
            if windows and lo <= windows[-1][1]:
                windows[-1] = (windows[-1][0], hi)
            else:
                windows.append((lo, hi))
        return windows

    def rows(self):
        return [(float(t), c, int(i)) for t, c, i in zip(self.times, self.chi, self.iterations)]


def detect_jumps(chi, factor=10.0):
    """Flag samples whose step from the previous sample exceeds factor * median step."""
    chi = np.asarray(chi)
    flags = np.zeros(len(chi), dtype=bool)
    if len(chi) < 3:
        return flags
    steps = np.linalg.norm(np.diff(chi, axis=0), axis=1)
    med = np.median(steps)
    thresh = factor * med if med > 0 else 0.0
    # below round-off nothing counts as a jump
    thresh = max(thresh, 1e-9 * (1.0 + np.max(np.abs(chi))))
    flags[1:] = steps > thresh
    return flags


def reference_trajectory(p: ProblemDef, cfg: BarrierConfig, times, chi_init,
                         tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                         method="safeguarded", fallback=None,
                         resync_distance=None) -> ReferenceTrajectory:
    """Instant-wise minimizers chi*(t), each warm-started from the previous samples.

    The start point is the linear extrapolation of the last two converged
    samples (the last sample alone after a failure). ``fallback`` optionally
    holds one start point per sample (typically the simulated closed-loop
    states); it is tried when the warm start does not converge, which keeps the
    reference on the branch that is actually being tracked after a minimizer
    branch ends. The warm attempt then skips the flow phase. With
    ``resync_distance`` set, a converged warm solution farther than that from
    the fallback point is also re-solved from the fallback point, and the
    solution nearer to it is kept: the reference then follows whichever local
    minimizer the fallback states are near. Every sample is still a converged
    stationary point of its own instant. After a resync attempt that does not
    switch, or a fallback solve that fails, the next ``RESYNC_STRIDE`` samples
    make no fallback attempts.

    Samples that fail to converge keep their best iterate, are marked in
    ``converged`` and are flagged like jumps.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if fallback is not None:
        fallback = np.asarray(fallback, dtype=float).reshape(len(times), p.d_x)
    chi = np.empty((len(times), p.d_x))
    iters = np.empty(len(times), dtype=int)
    ok = np.empty(len(times), dtype=bool)
    source = np.zeros(len(times), dtype=int)
    guess = np.asarray(chi_init, dtype=float)
    J = None
    skip_until = -1
    for k, t in enumerate(times):
        rep = solve_instant(p, cfg, t, guess, tol=tol, max_iter=max_iter,
                            raise_on_fail=False, keep_history=False, method=method,
                            jacobian=J, flow_budget=FLOW_BUDGET if fallback is None else 0)
        used = rep.iterations
        if (rep.converged and resync_distance is not None and fallback is not None
                and k >= skip_until
                and np.linalg.norm(rep.chi_star - fallback[k]) > resync_distance):
            alt = solve_instant(p, cfg, t, fallback[k], tol=tol, max_iter=max_iter,
                                raise_on_fail=False, keep_history=False, method=method,
                                flow_budget=0)
            used += alt.iterations
            if alt.converged and (np.linalg.norm(alt.chi_star - fallback[k])
                                  < np.linalg.norm(rep.chi_star - fallback[k])):
                rep = alt
                source[k] = 2
            else:
                skip_until = k + RESYNC_STRIDE
        elif not rep.converged and fallback is not None and k >= skip_until:
            rep = solve_instant(p, cfg, t, fallback[k], tol=tol, max_iter=max_iter,
                                raise_on_fail=False, keep_history=False, method=method)
            used += rep.iterations
            source[k] = 1 if rep.converged else -1
            if not rep.converged:
                skip_until = k + RESYNC_STRIDE
        elif not rep.converged:
            source[k] = -1
        chi[k], iters[k], ok[k] = rep.chi_star, used, rep.converged
        J = rep.jacobian if rep.converged else None
        # linear extrapolation from the last two converged samples
        if k > 0 and ok[k] and ok[k - 1] and source[k] == source[k - 1] == 0:
            guess = rep.chi_star + (rep.chi_star - chi[k - 1]) * (
                (times[k + 1] - t) / (t - times[k - 1]) if k + 1 < len(times) else 1.0)
        else:
            guess = rep.chi_star
    return ReferenceTrajectory(times=times, chi=chi, iterations=iters, converged=ok,
                               jump_flags=detect_jumps(chi) | ~ok, source=source)


def tracking_control_from_solution(bundle: EvalBundle, chi_star, K_chi):
    """u solving B(x) u = -f_A(x) + K_chi (chi* - x)."""
    return _solve_input(bundle.B, -bundle.f_A + K_chi * (np.asarray(chi_star) - bundle.x))
