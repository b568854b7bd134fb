"""Lossless realizations of dissipative linear behaviour.

A dissipative convolution kernel can be traded for a bank of undamped
oscillators: on a finite window the kernel has a Fourier expansion, each
(suitably shifted) residue is positive semidefinite, and a PSD residue at
frequency w is exactly the impulse response of a skew block

    J = [[0, wI], [-wI, 0]],   B = [P; -Q],

where the residue factors as (P + jQ)^H (P + jQ).  Summing blocks gives a
lossless system whose response approximates the original kernel, with the
error controlled by the window length and harmonic count.

Two entry points build such banks:

* `memoryless_lossless_approx` spreads a constant gain matrix over
  equal-weight harmonics (the antisymmetric part of the gain is already
  lossless and rides along as a direct term);
* `dissipative_lossless_approx` runs the full synthesis for a sampled
  kernel: window selection from tail mass, Fourier coefficients, PSD
  shift, per-harmonic realization, and an L2 error measurement.

Responses of the realizations are computed matrix-free by an exponential
integrator that convolves the piecewise-linear interpolant of the input
exactly, so a 10^4-state bank costs the same as its harmonic count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse
from scipy.integrate import cumulative_trapezoid, trapezoid

from ._util import as_float_array, frozen, require_square
from .statespace import PSD_TOL, LosslessLinear, Trajectory, check_dissipative

__all__ = [
    "MemorylessSystem",
    "HarmonicApprox",
    "FourierLosslessApprox",
    "split_symmetric",
    "factor_psd",
    "memoryless_lossless_approx",
    "memoryless_error_bound",
    "fourier_coefficients",
    "select_tau",
    "dissipative_lossless_approx",
    "realize_harmonic",
    "l2_error",
]

#: Dense/sparse crossover for assembled bank generators.
_DENSE_LIMIT = 2000

#: Elements per chunk in the streaming convolution and series evaluation.
_CHUNK_ELEMENTS = 500_000


def split_symmetric(gain) -> tuple[np.ndarray, np.ndarray]:
    """Split a square gain into symmetric and antisymmetric parts."""
    k = as_float_array(np.atleast_2d(gain), "gain", ndim=2)
    require_square(k, "gain")
    return (k + k.T) / 2.0, (k - k.T) / 2.0


def factor_psd(sym, rank: int | None = None, rank_tol: float = 1e-12,
               psd_tol: float = PSD_TOL) -> np.ndarray:
    """Low-rank factor F (r x p) of a symmetric PSD matrix, F^T F = sym.

    The rank is the number of eigenvalues above rank_tol times the largest
    one, unless forced.  Indefinite input is rejected with the offending
    eigenvalue; eigenvalues negative within psd_tol are clipped to zero.
    """
    s = as_float_array(np.atleast_2d(sym), "matrix", ndim=2)
    require_square(s, "matrix")
    if np.abs(s - s.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(s).max(initial=0.0)):
        raise ValueError("matrix must be symmetric")
    lam, vec = np.linalg.eigh(s)
    scale = max(lam[-1], 1.0) if lam.size else 1.0
    if lam.size and lam[0] < -psd_tol * scale:
        raise ValueError(
            f"matrix is not positive semidefinite: smallest eigenvalue {lam[0]:.6e}"
        )
    lam = np.clip(lam, 0.0, None)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    if rank is None:
        cut = rank_tol * (lam[0] if lam.size else 0.0)
        rank = int(np.count_nonzero(lam > cut))
    elif not 0 <= rank <= s.shape[0]:
        raise ValueError(f"rank must lie in [0, {s.shape[0]}], got {rank}")
    return (vec[:, :rank] * np.sqrt(lam[:rank])).T


@dataclass(frozen=True)
class MemorylessSystem:
    """Constant gain y = K u split for lossless realization.

    `factor` has r rows with factor^T factor = symmetric_part; r is the
    numerical rank of the dissipative channel.
    """

    gain: np.ndarray
    symmetric_part: np.ndarray
    antisymmetric_part: np.ndarray
    factor: np.ndarray

    def __post_init__(self):
        for name in ("gain", "symmetric_part", "antisymmetric_part", "factor"):
            object.__setattr__(self, name, frozen(np.asarray(getattr(self, name), float)))
        resid = np.abs(self.factor.T @ self.factor - self.symmetric_part).max(initial=0.0)
        if resid > 1e-10 * max(1.0, np.abs(self.symmetric_part).max(initial=0.0)):
            raise ValueError(f"factor does not reproduce the symmetric part ({resid:.3e})")

    @property
    def ports(self) -> int:
        return self.gain.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[0]

    @classmethod
    def from_gain(cls, gain, rank_tol: float = 1e-12) -> "MemorylessSystem":
        sym, antisym = split_symmetric(gain)
        try:
            fac = factor_psd(sym, rank_tol=rank_tol)
        except ValueError as exc:
            raise ValueError(
                "gain has an active (indefinite) symmetric part; "
                "use the nonlinear energy-supply construction instead"
            ) from exc
        return cls(gain=np.atleast_2d(np.asarray(gain, float)), symmetric_part=sym,
                   antisymmetric_part=antisym, factor=fac)


@dataclass(frozen=True)
class _HarmonicSeries:
    """Trigonometric kernel sum_k (C_k cos w_k t + S_k sin w_k t).

    Entry 0 is the DC term (w_0 = 0, S_0 = 0) with its half weight already
    folded into C_0.  Shapes: omegas (N,), cos_part/sin_part (N, q, p).
    """

    omegas: np.ndarray
    cos_part: np.ndarray
    sin_part: np.ndarray

    def transposed(self) -> "_HarmonicSeries":
        return _HarmonicSeries(
            omegas=self.omegas,
            cos_part=np.transpose(self.cos_part, (0, 2, 1)),
            sin_part=np.transpose(self.sin_part, (0, 2, 1)),
        )

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Kernel samples on an arbitrary time grid, shape (m, q, p)."""
        t = np.asarray(times, float).ravel()
        n = max(len(self.omegas), 1)
        out = np.zeros((t.size,) + self.cos_part.shape[1:])
        step = max(1, _CHUNK_ELEMENTS // n)
        for lo in range(0, t.size, step):
            phase = np.outer(t[lo : lo + step], self.omegas)
            out[lo : lo + step] = np.einsum("ik,kqp->iqp", np.cos(phase), self.cos_part)
            out[lo : lo + step] += np.einsum("ik,kqp->iqp", np.sin(phase), self.sin_part)
        return out

    def convolve(self, u_vals: np.ndarray, dt: float, reverse: bool = False) -> np.ndarray:
        """Zero-state response: the kernel convolved with u on a uniform grid.

        The input is treated as piecewise linear between samples and each
        harmonic is advanced by the exact one-step exponential update, so
        the result is the exact convolution of the interpolant; no time-step
        stability limit enters however large the top frequency is.
        """
        series = self.transposed() if reverse else self
        u = np.asarray(u_vals, float)
        if u.ndim == 1:
            u = u[:, None]
        m, p = u.shape
        n = len(series.omegas)
        q = series.cos_part.shape[1]
        y = np.zeros((m, q))
        if n == 0 or m < 2:
            return y
        ah = series.omegas * dt
        alpha = np.exp(1j * ah)
        jw = 1j * series.omegas
        with np.errstate(divide="ignore", invalid="ignore"):
            phi1 = np.where(ah != 0, (alpha - 1.0) / jw, dt)
            phi2 = np.where(ah != 0, (alpha - 1.0 - 1j * ah) / (jw * jw * dt), dt / 2.0)
        z = np.zeros((n, p), dtype=complex)
        chunk = max(16, _CHUNK_ELEMENTS // (n * p))
        pos = 0
        while pos < m - 1:
            cnt = min(chunk, m - 1 - pos)
            du = u[pos + 1 : pos + cnt + 1] - u[pos : pos + cnt]
            beta = (
                phi1[None, :, None] * u[pos : pos + cnt, None, :]
                + phi2[None, :, None] * du[:, None, :]
            )
            steps = np.arange(1, cnt + 1)
            back = np.exp(-1j * np.outer(steps, ah))
            fwd = np.exp(1j * np.outer(steps, ah))
            accum = np.cumsum(back[:, :, None] * beta, axis=0)
            zs = fwd[:, :, None] * (z[None, :, :] + accum)
            y[pos + 1 : pos + cnt + 1] = np.einsum("kqp,jkp->jq", series.cos_part, zs.real)
            y[pos + 1 : pos + cnt + 1] += np.einsum("kqp,jkp->jq", series.sin_part, zs.imag)
            z = zs[-1]
            pos += cnt
        return y


def realize_harmonic(residue, frequency: float, psd_tol: float = PSD_TOL) -> LosslessLinear:
    """Skew oscillator block whose impulse response is one kernel harmonic.

    For a Hermitian PSD residue R = (P + jQ)^H (P + jQ) and frequency w > 0
    the block below satisfies B^T e^{Jt} B = Re(R) cos wt - Im(R) sin wt;
    at w = 0 the block is static with B^T B = R/2 (the half-weight DC term
    of a cosine series).  Eigenvalues of R in [-psd_tol, 0] are clipped to
    zero; anything lower is rejected.
    """
    r = np.asarray(residue)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"residue must be square, got shape {r.shape}")
    scale = max(1.0, np.abs(r).max(initial=0.0))
    if np.abs(r - r.conj().T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("residue must be Hermitian")
    if frequency < 0:
        raise ValueError(f"frequency must be nonnegative, got {frequency}")
    p = r.shape[0]
    lam, vec = np.linalg.eigh(r)
    if lam.size and lam[0] < -psd_tol * scale:
        raise ValueError(
            f"residue is not positive semidefinite: smallest eigenvalue {lam[0]:.6e}"
        )
    lam = np.clip(lam, 0.0, None)
    keep = lam > (lam[-1] * 1e-14 if lam.size else 0.0)
    lam, vec = lam[keep], vec[:, keep]
    rank = int(lam.size)
    if frequency == 0.0:
        half = (vec * np.sqrt(lam / 2.0)).conj().T
        if np.abs(half.imag).max(initial=0.0) > 1e-12:
            raise ValueError("a zero-frequency residue must be real symmetric")
        return LosslessLinear(J=np.zeros((rank, rank)), B=half.real.reshape(rank, p))
    w = (vec * np.sqrt(lam)).conj().T
    j_block = np.zeros((2 * rank, 2 * rank))
    j_block[:rank, rank:] = frequency * np.eye(rank)
    j_block[rank:, :rank] = -frequency * np.eye(rank)
    b_block = np.vstack([w.real, -w.imag]).reshape(2 * rank, p)
    return LosslessLinear(J=j_block, B=b_block)


def _block_effective(block: LosslessLinear, frequency: float) -> tuple[np.ndarray, np.ndarray]:
    """(cosine, sine) kernel coefficients actually realized by a block."""
    b = np.asarray(block.B)
    if frequency == 0.0:
        return b.T @ b, np.zeros((b.shape[1], b.shape[1]))
    rank = block.n // 2
    p_part, q_part = b[:rank], -b[rank:]
    return p_part.T @ p_part + q_part.T @ q_part, q_part.T @ p_part - p_part.T @ q_part


def _assemble(blocks, ports: int) -> LosslessLinear:
    dims = [blk.n for blk in blocks]
    total = int(sum(dims))
    if total == 0:
        return LosslessLinear(J=np.zeros((0, 0)), B=np.zeros((0, ports)))
    b_all = np.vstack([np.asarray(blk.B) for blk in blocks if blk.n > 0])
    j_parts = [np.asarray(blk.J) for blk in blocks if blk.n > 0]
    if total > _DENSE_LIMIT:
        j_all = scipy.sparse.block_diag(j_parts, format="csr")
    else:
        j_all = scipy.linalg.block_diag(*j_parts)
    return LosslessLinear(J=j_all, B=b_all)


class _HarmonicResponseMixin:
    """Matrix-free response evaluation shared by the two bank records."""

    def kernel(self, times) -> np.ndarray:
        """Impulse-response samples of the realization (direct term excluded)."""
        return self._series().evaluate(np.asarray(times, float))

    def zero_state_response(self, u_vals, dt: float, reverse: bool = False) -> np.ndarray:
        """Convolution part of the response; `reverse` uses the transposed
        kernel, which is the response of the sign-flipped generator."""
        return self._series().convolve(u_vals, dt, reverse=reverse)

    def respond(self, u: Trajectory) -> Trajectory:
        """Full port response to a sampled input, direct term included."""
        vals = u.values if u.values.ndim > 1 else u.values[:, None]
        y = self.zero_state_response(vals, u.dt) + vals @ np.asarray(self.direct_term).T
        return Trajectory(dt=u.dt, values=y)


@dataclass(frozen=True)
class HarmonicApprox(_HarmonicResponseMixin):
    """Equal-weight harmonic bank realizing a memoryless dissipative gain.

    The realized impulse response is

        K_s/horizon + sum_{l=1}^{count-1} (2 K_s/horizon) cos(l w0 t),

    w0 = pi/horizon, which acts like the gain K_s on inputs that vary
    slowly against the window.  The antisymmetric gain part is the direct
    term of `system`.  `harmonic_input_map` is the unscaled input map; the
    assembled system uses sqrt(2) times it.
    """

    horizon: float
    n_harmonics: int
    base_frequency: float
    memoryless: MemorylessSystem
    system: LosslessLinear
    harmonic_input_map: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "harmonic_input_map",
                           frozen(np.asarray(self.harmonic_input_map, float)))

    @property
    def direct_term(self) -> np.ndarray:
        return self.memoryless.antisymmetric_part

    def _series(self) -> _HarmonicSeries:
        n, tau = self.n_harmonics, self.horizon
        sym = self.memoryless.symmetric_part
        cos_part = np.repeat((2.0 / tau) * sym[None, :, :], n, axis=0)
        cos_part[0] *= 0.5
        return _HarmonicSeries(
            omegas=self.base_frequency * np.arange(n),
            cos_part=cos_part,
            sin_part=np.zeros_like(cos_part),
        )


def memoryless_lossless_approx(gain, horizon: float, n_harmonics: int,
                               rank_tol: float = 1e-12) -> HarmonicApprox:
    """Lossless oscillator bank approximating the memoryless map y = gain u.

    State layout: one static block of size r (the DC harmonic), then the
    cosine and sine halves of the n_harmonics - 1 oscillating pairs, r
    states each, for (2 n_harmonics - 1) r states in total.
    """
    if horizon <= 0 or not np.isfinite(horizon):
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n_harmonics < 2:
        raise ValueError(f"need at least 2 harmonics, got {n_harmonics}")
    ms = MemorylessSystem.from_gain(gain, rank_tol=rank_tol)
    r, p = ms.rank, ms.ports
    w0 = np.pi / horizon
    pairs = (n_harmonics - 1) * r
    omega = w0 * np.kron(np.diag(np.arange(1, n_harmonics)), np.eye(r))
    j_bank = np.zeros((r + 2 * pairs, r + 2 * pairs))
    j_bank[r : r + pairs, r + pairs :] = omega
    j_bank[r + pairs :, r : r + pairs] = -omega
    input_map = np.vstack([
        ms.factor / np.sqrt(2.0),
        np.tile(ms.factor, (n_harmonics - 1, 1)),
        np.zeros((pairs, p)),
    ]) / np.sqrt(horizon)
    j_stored = scipy.sparse.csr_matrix(j_bank) if j_bank.shape[0] > _DENSE_LIMIT else j_bank
    system = LosslessLinear(J=j_stored, B=np.sqrt(2.0) * input_map,
                            D=ms.antisymmetric_part)
    return HarmonicApprox(
        horizon=float(horizon),
        n_harmonics=int(n_harmonics),
        base_frequency=w0,
        memoryless=ms,
        system=system,
        harmonic_input_map=input_map,
    )


def memoryless_error_bound(symmetric_gain, horizon: float, n_harmonics: int,
                           u: Trajectory) -> Trajectory:
    """Pointwise bound on |y - y_bank| for a harmonic-bank approximation.

    bound(t) = (2 s_max horizon / (pi^2 (n-1))) (|u'(t)| + |u'(0)| +
    integral of |u''| up to t), valid for twice-differentiable inputs with
    u(0) = 0; s_max is the largest singular value of the symmetric gain.
    Derivatives are taken by second-order finite differences on the grid.
    """
    if n_harmonics < 2:
        raise ValueError(f"need at least 2 harmonics, got {n_harmonics}")
    sym = as_float_array(np.atleast_2d(symmetric_gain), "symmetric gain", ndim=2)
    vals = u.values if u.values.ndim > 1 else u.values[:, None]
    peak = np.abs(vals).max(initial=0.0)
    if np.abs(vals[0]).max(initial=0.0) > 1e-12 * max(1.0, peak):
        raise ValueError("the bound requires an input starting at zero, u(0) = 0")
    s_max = float(np.linalg.norm(sym, 2))
    du = np.gradient(vals, u.dt, axis=0)
    ddu = np.gradient(du, u.dt, axis=0)
    dn = np.linalg.norm(du, axis=1)
    curvature_mass = cumulative_trapezoid(np.linalg.norm(ddu, axis=1), dx=u.dt, initial=0.0)
    factor = 2.0 * s_max * horizon / (np.pi**2 * (n_harmonics - 1))
    return Trajectory(dt=u.dt, values=factor * (dn + dn[0] + curvature_mass))


def _as_kernel_samples(vals: np.ndarray) -> np.ndarray:
    if vals.ndim == 1:
        return vals[:, None, None]
    if vals.ndim == 2 and vals.shape[1] == 1:
        return vals[:, :, None]
    if vals.ndim == 3 and vals.shape[1] == vals.shape[2]:
        return vals
    raise ValueError(f"kernel samples must be square matrices, got shape {vals.shape}")


def fourier_coefficients(g: Trajectory, n_harmonics: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine/sine coefficients of a kernel on its own window [0, T].

    cos_k = (1/T) integral of (g + g^T) cos(k pi t / T),  k = 0..n-1,
    sin_k = (1/T) integral of (g - g^T) sin(k pi t / T),  k = 1..n-1,

    by the trapezoid rule on the sample grid, evaluated through type-I
    cosine/sine transforms (identical sums, one FFT instead of n passes).
    Symmetry of cos_k and antisymmetry of sin_k hold by construction.
    """
    vals = _as_kernel_samples(g.values)
    intervals = vals.shape[0] - 1
    if intervals < 2:
        raise ValueError("kernel needs at least 3 samples")
    if not 1 <= n_harmonics <= intervals:
        raise ValueError(
            f"harmonic count must lie in [1, {intervals}] for this grid, got {n_harmonics}"
        )
    sym = vals + np.transpose(vals, (0, 2, 1))
    antisym = vals - np.transpose(vals, (0, 2, 1))
    cos_coef = scipy.fft.dct(sym, type=1, axis=0)[:n_harmonics] / (2.0 * intervals)
    if n_harmonics > 1:
        sin_coef = scipy.fft.dst(antisym[1:intervals], type=1, axis=0)[: n_harmonics - 1]
        sin_coef = sin_coef / (2.0 * intervals)
    else:
        sin_coef = np.zeros((0,) + vals.shape[1:])
    return cos_coef, sin_coef


def _spectral_norms(vals: np.ndarray) -> np.ndarray:
    if vals.shape[1] == 1:
        return np.abs(vals[:, 0, 0])
    return np.linalg.norm(vals, ord=2, axis=(1, 2))


def _exponential_tail(norms: np.ndarray, times: np.ndarray) -> float | None:
    """Fitted decay rate of ||g|| over the second half of the window."""
    half = norms[len(norms) // 2 :]
    if norms.max(initial=0.0) <= 0 or np.any(half <= 0):
        return None
    rate = -np.polyfit(times[len(norms) // 2 :], np.log(half), 1)[0]
    return rate if rate > 0 else None


def select_tau(g: Trajectory, target_error: float, min_horizon: float,
               error_constant: float,
               tail: Callable[[float], float] | None = None) -> float:
    """Smallest grid time with acceptable kernel tail mass.

    Returns the first sample time tau >= min_horizon such that the remaining
    mass integral of ||g(t)|| over [tau, inf) is at most
    target_error^2 / (2 error_constant sqrt(p)).  Mass beyond the sample
    window comes from `tail` (a callable mapping t to the exact remaining
    mass) or, failing that, from an exponential fit to the sampled decay.
    """
    if target_error <= 0:
        raise ValueError(f"target error must be positive, got {target_error}")
    vals = _as_kernel_samples(g.values)
    ports = vals.shape[1]
    times = g.times
    if min_horizon > times[-1] + 1e-12:
        raise ValueError(
            f"sample window ends at {times[-1]:.6g}, before the minimum horizon {min_horizon:.6g}"
        )
    if error_constant <= 0:
        return float(times[np.searchsorted(times, min_horizon - 1e-12)])
    threshold = target_error**2 / (2.0 * error_constant * np.sqrt(ports))
    norms = _spectral_norms(vals)
    if tail is not None:
        beyond = float(tail(float(times[-1])))
    else:
        rate = _exponential_tail(norms, times)
        if rate is None:
            raise ValueError(
                "kernel tail is not estimable from the samples (no decay fit); "
                "supply an analytic tail-mass callable"
            )
        beyond = float(norms[-1] / rate)
    mass = cumulative_trapezoid(norms, times, initial=0.0)
    remaining = (mass[-1] - mass) + beyond
    start = int(np.searchsorted(times, min_horizon - 1e-12))
    hits = np.nonzero(remaining[start:] <= threshold)[0]
    if hits.size == 0:
        raise ValueError(
            f"tail mass {remaining[-1]:.6e} at the window end exceeds the "
            f"required {threshold:.6e}; extend the sample window"
        )
    return float(times[start + hits[0]])


@dataclass(frozen=True)
class FourierLosslessApprox(_HarmonicResponseMixin):
    """Windowed-Fourier lossless realization of a dissipative kernel.

    `cos_coefficients`/`sin_coefficients` are the raw window coefficients;
    the realization adds `shift` to every cosine coefficient (the PSD
    guarantee) and may clip residue eigenvalues at zero, so the kernel the
    bank actually plays back is recorded in `effective_cos`/`effective_sin`
    (DC entry stored at half weight).  `blocks` are the per-harmonic
    oscillator blocks in frequency order, direct-summed into `system`.
    `l2_error_measured` is the realized-vs-input kernel error over the
    measurement window; `n_empirical` is the smallest harmonic count whose
    partial bank already meets `target_error` there (None when even the
    full bank does not).
    """

    horizon: float
    n_harmonics: int
    shift: float
    target_error: float
    cos_coefficients: np.ndarray
    sin_coefficients: np.ndarray
    peak_gain: float
    derivative_mass: float
    kernel_mass: float
    error_constant: float
    tail_mass: float
    blocks: tuple[LosslessLinear, ...]
    system: LosslessLinear
    effective_cos: np.ndarray
    effective_sin: np.ndarray
    l2_error_measured: float
    n_empirical: int | None

    def __post_init__(self):
        for name in ("cos_coefficients", "sin_coefficients", "effective_cos", "effective_sin"):
            object.__setattr__(self, name, frozen(np.asarray(getattr(self, name), float)))

    @property
    def ports(self) -> int:
        return self.system.p

    @property
    def direct_term(self) -> np.ndarray:
        return np.zeros((self.ports, self.ports))

    def _series(self) -> _HarmonicSeries:
        return _HarmonicSeries(
            omegas=(np.pi / self.horizon) * np.arange(self.n_harmonics),
            cos_part=self.effective_cos,
            sin_part=self.effective_sin,
        )


def l2_error(a: Trajectory, b: Trajectory, horizon: float | None = None) -> float:
    """Frobenius L2 distance between two sampled kernels on a window."""
    if abs(a.dt - b.dt) > 1e-15:
        raise ValueError("kernels must share the sample step")
    va, vb = _as_kernel_samples(a.values), _as_kernel_samples(b.values)
    if va.shape[1:] != vb.shape[1:]:
        raise ValueError(f"kernel shapes differ: {va.shape[1:]} vs {vb.shape[1:]}")
    m = min(va.shape[0], vb.shape[0])
    if horizon is not None:
        m = min(m, int(round(horizon / a.dt)) + 1)
    diff = va[:m] - vb[:m]
    sq = np.sum(diff * diff, axis=(1, 2))
    return float(np.sqrt(trapezoid(sq, dx=a.dt)))


def _window_l2(series: _HarmonicSeries, target: np.ndarray, times: np.ndarray) -> float:
    diff = series.evaluate(times) - target
    sq = np.sum(diff * diff, axis=(1, 2))
    return float(np.sqrt(trapezoid(sq, x=times)))


def dissipative_lossless_approx(
    g: Trajectory,
    target_error: float,
    min_horizon: float,
    state_budget: int = 20000,
    tail: Callable[[float], float] | None = None,
    rank_tol: float = 1e-12,
    psd_tol: float = PSD_TOL,
    empirical: bool = True,
) -> FourierLosslessApprox:
    """Synthesize a lossless bank within a target L2 error of a kernel.

    The pipeline: verify the kernel is dissipative (a non-dissipative
    kernel admits no lossless realization and is refused); bound the
    kernel's size, slope mass, and tail; choose the window from the tail
    mass and the harmonic count from the window; compute windowed Fourier
    coefficients; shift them into PSD territory; realize each harmonic as
    an oscillator block; and measure the realized kernel against the input
    samples over [0, min_horizon].

    Raises when the kernel is not dissipative, when its tail cannot be
    bounded, when the sample window is shorter than the selected horizon,
    or when the required bank would exceed `state_budget` states.
    """
    if target_error <= 0:
        raise ValueError(f"target error must be positive, got {target_error}")
    if min_horizon <= 0:
        raise ValueError(f"minimum horizon must be positive, got {min_horizon}")
    vals = _as_kernel_samples(g.values)
    ports = vals.shape[1]
    times = g.times
    norms = _spectral_norms(vals)
    measure_end = min(int(round(min_horizon / g.dt)), vals.shape[0] - 1)
    measure_times = times[: measure_end + 1]
    measure_target = vals[: measure_end + 1]

    if norms.max(initial=0.0) == 0.0:
        empty = LosslessLinear(J=np.zeros((0, 0)), B=np.zeros((0, ports)))
        shape = (0, ports, ports)
        return FourierLosslessApprox(
            horizon=float(min_horizon), n_harmonics=0, shift=0.0,
            target_error=float(target_error),
            cos_coefficients=np.zeros(shape), sin_coefficients=np.zeros(shape),
            peak_gain=0.0, derivative_mass=0.0, kernel_mass=0.0,
            error_constant=0.0, tail_mass=0.0, blocks=(), system=empty,
            effective_cos=np.zeros(shape), effective_sin=np.zeros(shape),
            l2_error_measured=0.0, n_empirical=0,
        )

    verdict = check_dissipative(g)
    if not verdict.dissipative:
        raise ValueError(
            "kernel fails the positive-realness scan (minimum Hermitian-part "
            f"eigenvalue {verdict.min_eigenvalue:.6e}); no lossless realization exists"
        )

    if tail is not None:
        beyond_mass = float(tail(float(times[-1])))
        beyond_slope = norms[-1]
    else:
        rate = _exponential_tail(norms, times)
        if rate is None:
            raise ValueError(
                "kernel tail is not estimable from the samples; "
                "supply an analytic tail-mass callable"
            )
        beyond_mass = float(norms[-1] / rate)
        beyond_slope = float(norms[-1])
    slope_norms = _spectral_norms(np.gradient(vals, g.dt, axis=0))
    peak_gain = float(norms.max())
    derivative_mass = float(trapezoid(slope_norms, times) + beyond_slope)
    kernel_mass = float(trapezoid(norms, times) + beyond_mass)
    error_constant = (4.0 * peak_gain + 2.0 * derivative_mass) / np.pi \
        + 4.0 * kernel_mass / min_horizon

    horizon = select_tau(g, target_error, min_horizon, error_constant, tail=tail)
    n_harmonics = max(1, int(np.floor(horizon * error_constant**2 / target_error**2)))
    worst_dim = ports * (2 * n_harmonics - 1)
    if worst_dim > state_budget:
        raise ValueError(
            f"required harmonic count {n_harmonics} needs up to {worst_dim} states, "
            f"over the budget of {state_budget}; raise the budget or the target error"
        )
    window_idx = int(round(horizon / g.dt))
    window = Trajectory(dt=g.dt, values=vals[: window_idx + 1])
    n_harmonics = min(n_harmonics, window_idx)
    cos_coef, sin_coef = fourier_coefficients(window, n_harmonics)
    shift = target_error**2 / (horizon * error_constant * np.sqrt(ports))

    eye = np.eye(ports)
    base = np.pi / horizon
    blocks = [realize_harmonic(cos_coef[0] + shift * eye, 0.0, psd_tol=psd_tol)]
    for k in range(1, n_harmonics):
        blocks.append(
            realize_harmonic(cos_coef[k] + shift * eye - 1j * sin_coef[k - 1],
                             k * base, psd_tol=psd_tol)
        )
    system = _assemble(blocks, ports)
    eff_cos = np.empty((n_harmonics, ports, ports))
    eff_sin = np.zeros((n_harmonics, ports, ports))
    for k, blk in enumerate(blocks):
        eff_cos[k], eff_sin[k] = _block_effective(blk, k * base)

    tail_mass = float(
        (cumulative_trapezoid(norms, times, initial=0.0)[-1]
         - np.interp(horizon, times, cumulative_trapezoid(norms, times, initial=0.0)))
        + beyond_mass
    )
    series = _HarmonicSeries(omegas=base * np.arange(n_harmonics),
                             cos_part=eff_cos, sin_part=eff_sin)
    measured = _window_l2(series, measure_target, measure_times)

    n_empirical: int | None = None
    if empirical:
        if measured <= target_error:
            lo, hi = 1, n_harmonics
            while lo < hi:
                mid = (lo + hi) // 2
                partial = _HarmonicSeries(omegas=base * np.arange(mid),
                                          cos_part=eff_cos[:mid], sin_part=eff_sin[:mid])
                if _window_l2(partial, measure_target, measure_times) <= target_error:
                    hi = mid
                else:
                    lo = mid + 1
            n_empirical = lo

    return FourierLosslessApprox(
        horizon=float(horizon),
        n_harmonics=int(n_harmonics),
        shift=float(shift),
        target_error=float(target_error),
        cos_coefficients=cos_coef,
        sin_coefficients=sin_coef,
        peak_gain=peak_gain,
        derivative_mass=derivative_mass,
        kernel_mass=kernel_mass,
        error_constant=float(error_constant),
        tail_mass=tail_mass,
        blocks=tuple(blocks),
        system=system,
        effective_cos=eff_cos,
        effective_sin=eff_sin,
        l2_error_measured=measured,
        n_empirical=n_empirical,
    )
