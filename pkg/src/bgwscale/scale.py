"""The scale/harmonic functions Phi_q, Psi_q, Phi_0, Phi_{q,qbar}.

Every function is an integral of the shape

    prefactor * int_I exp{ -int_theta^v gamma } / D(v) * v^x dv

over I = (0, U) (U the smallest root of the denominator D, i.e. varphi or
varphi_qbar) or I = (varphi, 1).  One quadrature table per (model, q, qbar,
branch) serves all x: tanh-sinh nodes of I, the inner integral accumulated by
telescoping adaptive Gauss-Kronrod panels between consecutive nodes in the
chart variable, and everything stored in log space (the integrating factor
underflows near the root for moderate q already).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import model as md
from .errors import DomainError, PreconditionError, QuadratureError, UnsupportedRegimeError
from .quad import DEFAULT_CFG, QuadConfig, T_MAX, TSMap, gk_adaptive, make_gamma_t

#: |phi_q - varphi| below this selects the power-function branch Phi_q = varphi^x.
BOUNDARY_TIE_TOL = 1e-9

_LOG_CUT = 180.0      # stop extending the ladder once terms fall this far (in log) below the peak
_DIVERGENCE_LOG = 500.0

_PROBE_XS = (0, 1, 8, 24)


@dataclass
class KernelDiagnostics:
    level: int = 0
    converged: bool = True
    achieved_error: float = 0.0
    n_nodes: int = 0


class ScaleTable:
    """Quadrature table for one scale-function integral family."""

    def __init__(self, spec: md.ModelSpec, q: float, qbar: float, branch: str,
                 numerator: str, theta: float, anchor_end: bool, cfg: QuadConfig):
        self.spec = spec
        self.q = q
        self.qbar = qbar
        self.branch = branch          # "lower" | "upper"
        self.numerator = numerator    # "full" | "imm" | "unit"
        self.theta = theta
        self.anchor_end = anchor_end  # anchor the inner integral at the right endpoint
        self.cfg = cfg
        varphi = md.root_varphi(spec)
        if branch == "lower":
            self.low, self.high = 0.0, md.root_varphi_qbar(spec, qbar)
        else:
            self.low, self.high = varphi, 1.0
        self.chart = TSMap(self.low, self.high)
        self.gap = md.GapEvaluator(spec, qbar if branch == "lower" else 0.0)
        self.gamma_t = make_gamma_t(spec, q, self.chart, qbar=qbar if branch == "lower" else 0.0,
                                    numerator=numerator, upper=(branch == "upper"))
        self.diagnostics = KernelDiagnostics()
        self._refine()

    # -- construction --------------------------------------------------------

    def _refine(self) -> None:
        prev = None
        for level in range(5, 10):
            self._build_level(level)
            probes = np.array([self._raw_value(x) for x in _PROBE_XS])
            if prev is not None:
                scale = np.maximum(np.abs(probes), 1e-300)
                err = float(np.max(np.abs(probes - prev) / scale))
                self.diagnostics.achieved_error = err
                if err <= self.cfg.rel_tol:
                    self.diagnostics.converged = True
                    self.diagnostics.level = level
                    return
            prev = probes
        self.diagnostics.converged = False
        self.diagnostics.level = level

    def _build_level(self, level: int) -> None:
        h = 2.0 ** -level
        n = int(T_MAX / h)
        pts = self.chart.points(np.arange(-n, n + 1) * h)
        npts = len(pts.t)
        self.diagnostics.n_nodes = npts

        if self.branch == "lower":
            d_root, log_abs_droot = pts.db, pts.log_db
            d_one = pts.db if self.high == 1.0 else 1.0 - pts.v
            logv = pts.log_da  # a = 0, so v = da exactly
        else:
            d_root, log_abs_droot = -pts.da, pts.log_da
            d_one = pts.db
            logv = np.log1p(-pts.db)
        log_absD = self._log_abs_den(pts.v, d_root, log_abs_droot, d_one)

        # anchor node for the telescoped inner integral
        if self.anchor_end or self.branch == "upper":
            ja = npts - 1
        else:
            ja = int(np.argmin(np.abs(pts.t - self.chart.t_of(max(self.theta, 1e-300)))))
            if self.theta <= 0.0:
                ja = 0
        logw = np.full(npts, -np.inf)
        base = 0.0
        if not (self.anchor_end or self.branch == "upper") and self.theta > 0.0:
            # correction from theta to its nearest grid node (oriented)
            base = -self._panel(self.chart.t_of(self.theta), pts.t[ja])
        logw[ja] = base

        # Panel P_i = int_{t_i}^{t_{i+1}} gamma dt.  Updates per kernel type:
        #   theta-anchored  logw = -int_theta^v:  right: -P,  left: +P
        #   upper           logw = -int_v^1:      left: -P
        #   end-anchored    logw = +int_v^b:      left: +P (may diverge)
        left_sign = -1.0 if self.branch == "upper" else 1.0
        # the J-weighted assembly (unit numerator) has no 1/omega damping, so
        # every node matters; never cut that ladder
        no_cut = self.numerator == "unit"
        best = -math.inf
        acc = base
        for i in range(ja, npts - 1):
            term0 = math.log(h) + pts.log_dvdt[i] + acc - log_absD[i]
            best = max(best, term0)
            if term0 < best - _LOG_CUT and i > ja + 8 and not no_cut:
                break
            acc = acc - self._panel(pts.t[i], pts.t[i + 1])
            logw[i + 1] = acc
        acc = base
        for i in range(ja, 0, -1):
            term0 = math.log(h) + pts.log_dvdt[i] + acc - log_absD[i]
            best = max(best, term0)
            if term0 < best - _LOG_CUT and i < ja - 8 and not no_cut:
                break
            acc = acc + left_sign * self._panel(pts.t[i - 1], pts.t[i])
            if acc > _DIVERGENCE_LOG:
                raise QuadratureError("inner weight integral diverges", math.inf, math.inf)
            logw[i - 1] = acc

        self.pts = pts
        self.h = h
        self.logv = logv
        self.log_absD = log_absD
        self.logw = logw
        self.log_ts_w = math.log(h) + pts.log_dvdt

    def _panel(self, t0: float, t1: float) -> float:
        """int_{t0}^{t1} gamma dt in the chart variable (oriented)."""
        if t0 == t1:
            return 0.0
        def g(t):
            return self.gamma_t(self.chart.points(t))
        val, _ = gk_adaptive(g, t0, t1, 1e-15, 1e-13, self.cfg.max_depth)
        return val

    def _log_abs_den(self, v, d_root, log_abs_droot, d_one):
        gap = self.gap
        if gap.kind == "tabular":
            q1 = np.polynomial.polynomial.polyval(v, gap.q1)
            if gap.double_root:
                r = np.polynomial.polynomial.polyval(v, gap.q2)
                return 2.0 * log_abs_droot + np.log(np.abs(r))
            return log_abs_droot + np.log(np.abs(q1))
        us, a = gap.ustar, gap.alpha
        lam, qbar, p0 = gap.lam, gap.qbar, gap.p0
        # below ~1e-250 the factored den itself underflows; switch to
        # log|d_root| + log D'(root), exact at that proximity
        tiny = np.abs(d_root) < 1e-250
        with np.errstate(divide="ignore", invalid="ignore"):
            den = gap.den(v, d_root, d_one)
            plain = np.where(den != 0.0, np.log(np.abs(den)), -np.inf)
        dprime = lam + qbar - lam * (1.0 - p0) * a * us ** (a - 1.0)
        linear = log_abs_droot + math.log(abs(dprime))
        return np.where(tiny, linear, plain)

    # -- evaluation -----------------------------------------------------------

    def _terms_log(self, x: float, extra: np.ndarray | float = 0.0) -> np.ndarray:
        return self.log_ts_w + self.logw - self.log_absD + x * self.logv + extra

    def _raw_value(self, x: float, extra: np.ndarray | float = 0.0) -> float:
        lt = self._terms_log(x, extra)
        m = float(np.max(lt))
        if not math.isfinite(m):
            return 0.0
        return math.exp(m) * float(np.sum(np.exp(lt - m)))

    def value(self, prefactor: float, x: float, extra: np.ndarray | float = 0.0) -> float:
        return prefactor * self._raw_value(x, extra)

    def log_pgf_factors(self) -> tuple[np.ndarray, np.ndarray | None]:
        """(log p~(v_i), log r~(v_i)) on the nodes, for generating-function sums."""
        ptil = self.spec.offspring.pgf(np.clip(self.pts.v, 1e-300, 1.0))
        log_p = np.log(ptil)
        log_r = None
        if self.spec.has_immigration:
            d_one = self.pts.db if self.high == 1.0 else 1.0 - self.pts.v
            rt = 1.0 - self.spec.immigration.one_minus_pgf(self.pts.v, d_one)
            # culling makes r~ blow up like r_-1/v near 0; recompute plainly there
            small = self.pts.v < 1e-250
            if np.any(small) and self.spec.immigration.kind == "tabular" \
                    and self.spec.immigration.r_minus1 > 0.0:
                rt = np.where(small, np.inf, rt)
                log_r = np.where(small,
                                 math.log(self.spec.immigration.r_minus1) - self.logv,
                                 np.log(np.maximum(rt, 1e-300)))
            else:
                log_r = np.log(np.maximum(rt, 1e-300))
        return log_p, log_r

    # simplified mu=0 representation: Phi_q(x) = delta_{x0} + x int v^{x-1} omega dv
    def value_mu0_form(self, x: int) -> float:
        if x == 0:
            return 1.0
        lt = self.log_ts_w + self.logw + (x - 1) * self.logv
        m = float(np.max(lt))
        return x * math.exp(m) * float(np.sum(np.exp(lt - m)))

    # J(v) = int_v^1 dw/rho(w) against x v^{x-1} dv (mean explosion time)
    def value_with_J(self, x: int) -> float:
        J = -self.logw
        w = np.exp(self.log_ts_w + (x - 1) * self.logv)
        return x * float(np.sum(w * J))

    def value_mean_passage(self, x: int, a: int) -> float:
        # int (v^a - v^x) * exp{int_v^1 gamma_0} / D dv; logw holds +int_v^1 gamma_0
        with np.errstate(divide="ignore"):
            diff_log = a * self.logv + np.log(-np.expm1((x - a) * self.logv))
        lt = self.log_ts_w + self.logw - self.log_absD + diff_log
        m = float(np.max(lt))
        return math.exp(m) * float(np.sum(np.exp(lt - m)))


# ---------------------------------------------------------------------------
# table cache
# ---------------------------------------------------------------------------

_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _table(spec: md.ModelSpec, q: float, *, qbar: float = 0.0, branch: str = "lower",
           numerator: str = "full", theta: float | None = None, anchor_end: bool = False,
           cfg: QuadConfig = DEFAULT_CFG) -> ScaleTable:
    if theta is None:
        theta = md.root_phi_q(spec, q if numerator == "full" else 0.0)
    key = (spec, q, qbar, branch, numerator, theta, anchor_end, cfg)
    tbl = _CACHE.get(key)
    if tbl is None:
        with _CACHE_LOCK:
            tbl = _CACHE.get(key)
            if tbl is None:
                tbl = ScaleTable(spec, q, qbar, branch, numerator, theta, anchor_end, cfg)
                _CACHE[key] = tbl
    return tbl


def kernel_diagnostics(spec: md.ModelSpec, q: float, qbar: float = 0.0,
                       cfg: QuadConfig = DEFAULT_CFG) -> KernelDiagnostics | None:
    key = (spec, q, qbar, "lower", "full", md.root_phi_q(spec, q), False, cfg)
    tbl = _CACHE.get(key)
    return tbl.diagnostics if tbl is not None else None


# ---------------------------------------------------------------------------
# public scale functions
# ---------------------------------------------------------------------------

def _check_x(x) -> int:
    if x != int(x) or x < 0:
        raise DomainError("x must be a nonnegative integer")
    return int(x)


def phi_q_fn(spec: md.ModelSpec, q: float, x: int, cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Phi_q(x): positive harmonic function of the killed chain vanishing at infinity."""
    md.require_valid(spec)
    x = _check_x(x)
    if q <= 0.0:
        raise DomainError("phi_q_fn requires q > 0 (use phi_0_fn for q = 0)")
    varphi = md.root_varphi(spec)
    phi_q = md.root_phi_q(spec, q)
    if phi_q > varphi + BOUNDARY_TIE_TOL:
        raise UnsupportedRegimeError("phi_q <= varphi",
                                     f"phi_q={phi_q!r} > varphi={varphi!r}; need q >= mu*(r~(varphi)-1)")
    if abs(phi_q - varphi) < BOUNDARY_TIE_TOL:
        return varphi ** x
    return _table(spec, q, cfg=cfg).value(q, x)


def psi_q_fn(spec: md.ModelSpec, q: float, x: int, cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Psi_q(x) = 1 - q int_varphi^1 omega/rho v^x dv: the explosion-side harmonic function."""
    md.require_valid(spec)
    x = _check_x(x)
    if q <= 0.0:
        raise DomainError("psi_q_fn requires q > 0")
    if not md.is_explosive(spec):
        raise PreconditionError("psi_q_fn requires an explosive chain")
    varphi = md.root_varphi(spec)
    phi_q = md.root_phi_q(spec, q)
    if phi_q >= varphi - BOUNDARY_TIE_TOL:
        raise UnsupportedRegimeError("phi_q < varphi",
                                     f"phi_q={phi_q!r}, varphi={varphi!r}")
    return 1.0 - _table(spec, q, branch="upper", cfg=cfg).value(q, x)


def _phi0_uses_integral(spec: md.ModelSpec, cfg: QuadConfig) -> bool:
    """Case split for Phi_0: the mu-weighted integral when it converges
    (or when varphi < 1), the power function varphi^x otherwise."""
    if spec.mu == 0.0 or not spec.has_immigration:
        return False
    varphi = md.root_varphi(spec)
    phi = md.root_phi_q(spec, 0.0)
    if phi > varphi + BOUNDARY_TIE_TOL:
        raise UnsupportedRegimeError("phi <= varphi", f"phi={phi!r} > varphi={varphi!r}")
    if abs(phi - varphi) <= BOUNDARY_TIE_TOL:
        return False
    if varphi < 1.0:
        return True  # mu*(1 - r~(varphi)) > 0 here
    return not _phi0_integral_diverges(spec, cfg)


_PHI0_DIVERGES: dict = {}


def _phi0_integral_diverges(spec: md.ModelSpec, cfg: QuadConfig) -> bool:
    key = (spec, cfg)
    if key not in _PHI0_DIVERGES:
        _PHI0_DIVERGES[key] = _phi0_integral_diverges_impl(spec, cfg)
    return _PHI0_DIVERGES[key]


def _phi0_integral_diverges_impl(spec: md.ModelSpec, cfg: QuadConfig) -> bool:
    """Decide finiteness of int_0^1 exp{-int_phi^v gamma_0}/D dv by tail-window
    exponent extrapolation (windows (1-10^-j, 1-10^-j-1), j = 2..5).

    For an integrand ~ (1-v)^(-s) the window ratio is 10^(s-1); s >= 1 means
    divergence, so the threshold ratio 10^-0.1 classifies s > 0.9 as divergent.
    The model families in scope yield s = 1 (log divergence), s > 1, or
    super-polynomial decay, all far from the threshold.
    """
    varphi = md.root_varphi(spec)
    assert varphi == 1.0
    phi = md.root_phi_q(spec, 0.0)
    chart = TSMap(0.0, 1.0)
    gamma_t = make_gamma_t(spec, 0.0, chart, numerator="imm")
    gap = md.GapEvaluator(spec, 0.0)

    def gamma_v(u):  # gamma_0 as a function of u = 1-v
        v = 1.0 - u
        den = gap.den(v, u, u)
        num = spec.mu * spec.immigration.one_minus_pgf(v, u)
        return num / den

    # base inner integral from phi up to v = 1 - 1e-2
    t0 = chart.t_of(max(phi, 1e-300)) if phi > 0.0 else -T_MAX
    base, _ = gk_adaptive(lambda t: gamma_t(chart.points(t)), t0, chart.t_of(1.0 - 1e-2),
                          1e-14, 1e-12)
    L = -base
    windows = []
    for j in range(2, 6):
        u_hi, u_lo = 10.0 ** -j, 10.0 ** -(j + 1)
        # walk the window in log-u steps, telescoping the inner integral
        ss = np.linspace(math.log(u_hi), math.log(u_lo), 9)
        wsum = 0.0
        for s0, s1 in zip(ss[:-1], ss[1:]):
            dL, _ = gk_adaptive(lambda s: gamma_v(np.exp(s)) * np.exp(s), s1, s0, 1e-16, 1e-10)
            # integrate exp(L)/D over the sub-window in s
            smid = 0.5 * (s0 + s1)
            def f(s):
                u = np.exp(s)
                v = 1.0 - u
                den = gap.den(v, u, u)
                # linear interpolation of L in s is enough for a ratio test
                frac = (s - s1) / (s0 - s1)
                Ls = L - dL * (1.0 - frac)
                return np.exp(Ls) / den * u
            val, _ = gk_adaptive(f, s1, s0, 1e-300, 1e-8)
            wsum += val
            L -= dL  # moving toward u_lo accumulates -int gamma
        windows.append(wsum)
    w2, w3 = windows[-2], windows[-1]
    if w3 == 0.0:
        return False
    return (w3 / w2) > 10.0 ** -0.1


def phi_0_fn(spec: md.ModelSpec, x: int, cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Phi_0(x): the q = 0 scale function (passage probabilities Phi_0(x)/Phi_0(a))."""
    md.require_valid(spec)
    x = _check_x(x)
    varphi = md.root_varphi(spec)
    if _phi0_uses_integral(spec, cfg):
        phi = md.root_phi_q(spec, 0.0)
        return _table(spec, 0.0, numerator="imm", theta=phi, cfg=cfg).value(spec.mu, x)
    return varphi ** x


def phi_q_qbar_fn(spec: md.ModelSpec, q: float, qbar: float, x: int,
                  cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Phi_{q,qbar}(x): joint discount/accumulated-population scale function."""
    md.require_valid(spec)
    x = _check_x(x)
    if q < 0.0 or qbar < 0.0:
        raise DomainError("q and qbar must be >= 0")
    vq = md.root_varphi_qbar(spec, qbar)
    if q == 0.0 and vq >= 1.0:
        raise PreconditionError("need q > 0 or varphi_qbar < 1")
    if spec.mu == 0.0 and q == 0.0:
        # q -> 0 limit of the general expression (power function)
        return vq ** x
    shift = spec.mu * (spec.immigration.pgf(vq) - 1.0) if spec.has_immigration else 0.0
    if not q > shift + 1e-12:
        raise UnsupportedRegimeError("q > mu*(r~(varphi_qbar)-1)",
                                     f"q={q!r}, mu*(r~(varphi_qbar)-1)={shift!r}")
    theta = md.root_phi_q(spec, q)
    return _table(spec, q, qbar=qbar, theta=theta, cfg=cfg).value(q - shift, x)


# ---------------------------------------------------------------------------
# harmonic equation residual
# ---------------------------------------------------------------------------

def harmonic_residual(spec: md.ModelSpec, q: float, qbar: float, f: str, x: int,
                      cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Relative residual of (q + qbar*x + lam*x + mu) f(x) = lam*x sum_k p_k f(x+k-1)
    + mu sum_k r_k f(x+k) for f one of "phi_q" | "psi_q" | "phi_q_qbar".

    The sums are evaluated in generating-function form (sum_k p_k v^{x+k-1} =
    v^{x-1} p~(v) under the integral), which is exact for the heavy-tailed
    analytic laws where direct truncation cannot reach 1e-6.
    """
    md.require_valid(spec)
    if x < 1:
        raise DomainError("x must be >= 1")
    lam, mu = spec.lam, spec.mu
    varphi = md.root_varphi(spec)

    if f == "phi_q":
        phi_q = md.root_phi_q(spec, q)
        if phi_q > varphi + BOUNDARY_TIE_TOL:
            raise UnsupportedRegimeError("phi_q <= varphi",
                                         f"phi_q={phi_q!r} > varphi={varphi!r}")
        if abs(phi_q - varphi) < BOUNDARY_TIE_TOL:
            fx = varphi ** x
            sp = varphi ** (x - 1) * spec.offspring.pgf(varphi)
            sr = varphi ** x * (spec.immigration.pgf(varphi) if spec.has_immigration else 0.0)
            lhs = (q + lam * x + mu) * fx
            rhs = lam * x * sp + mu * sr
            return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        tbl = _table(spec, q, cfg=cfg)
        pref = q
        fx = tbl.value(pref, x)
        base = 1.0
    elif f == "phi_q_qbar":
        vq = md.root_varphi_qbar(spec, qbar)
        shift = spec.mu * (spec.immigration.pgf(vq) - 1.0) if spec.has_immigration else 0.0
        tbl = _table(spec, q, qbar=qbar, theta=md.root_phi_q(spec, q), cfg=cfg)
        pref = q - shift
        fx = tbl.value(pref, x)
        base = 1.0
    elif f == "psi_q":
        tbl = _table(spec, q, branch="upper", cfg=cfg)
        pref = q
        fx = 1.0 - tbl.value(pref, x)
        base = -1.0  # f = 1 - integral, and sum_k p_k * 1 = 1
    else:
        raise DomainError(f"unknown scale function tag {f!r}")

    log_p, log_r = tbl.log_pgf_factors()
    sp_int = tbl.value(pref, x - 1, extra=log_p)
    sp = 1.0 - sp_int if base < 0 else sp_int
    if mu > 0.0 and spec.has_immigration:
        sr_int = tbl.value(pref, x, extra=log_r)
        sr = 1.0 - sr_int if base < 0 else sr_int
    else:
        sr = 0.0
    lhs = (q + qbar * x + lam * x + mu) * fx
    rhs = lam * x * sp + mu * sr
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# internal alternates used by property tests -------------------------------

def phi_q_mu0_simplified(spec: md.ModelSpec, q: float, x: int,
                         cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Integration-by-parts form valid for mu = 0:
    Phi_q(x) = delta_{x0} + x int_0^varphi v^{x-1} exp{-int_0^v gamma_q} dv."""
    if spec.mu != 0.0:
        raise PreconditionError("simplified form needs mu = 0")
    x = _check_x(x)
    return _table(spec, q, cfg=cfg).value_mu0_form(x)


def phi_q_with_delimiter(spec: md.ModelSpec, q: float, x: int, theta: float,
                         cfg: QuadConfig = DEFAULT_CFG) -> float:
    """Phi_q with the lower delimiter replaced by theta in (0, varphi); differs
    from phi_q_fn by an x-independent factor only."""
    varphi = md.root_varphi(spec)
    if not (0.0 < theta < varphi):
        raise DomainError("theta must lie in (0, varphi)")
    return _table(spec, q, theta=theta, cfg=cfg).value(q, _check_x(x))
