"""Classical post-processing: sifting, DC removal, phase remap, estimation.

Pipeline order for a session (see :func:`estimate_session`):

1. per frame, subtract the per-basis mean of Bob's data (leakage DC);
2. per frame, estimate the interferometer phase from a disclosed subset;
3. rotate Alice's data by the estimated phase and sift;
4. estimate ``eta*G`` and ``chi`` from the undisclosed pairs;
5. split the excess noise into ``epsilon_A`` (from a calibrated ``delta``),
   ``N_Bob`` and ``N_leak``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .keyrate import (
    MODELS,
    DomainError,
    KeyRateResult,
    NoiseBudget,
    SystemParameters,
    secure_key_rate,
)
from .simulator import BASIS_P, BASIS_X, SessionData, rotate

MIN_PHASE_PAIRS = 100
MIN_CHANNEL_PAIRS = 100
MIN_CALIBRATION_V_A = 1e4
DEFAULT_DISCLOSE_FRACTION = 0.1
_DISCLOSE_SALT = 0x5EED


class EstimationError(ValueError):
    """Data are insufficient or degenerate for the requested estimate."""


@dataclass(frozen=True)
class SiftedPairs:
    """Alice's value of the quadrature Bob measured, paired with Bob's sample."""

    alice: np.ndarray
    bob: np.ndarray
    basis: np.ndarray
    #: number of groups each centred separately upstream (frame x basis)
    centred_groups: int = 1

    def __len__(self) -> int:
        return len(self.bob)


def sift(x_a, p_a, basis, y_b) -> SiftedPairs:
    """Keep only the quadrature Bob measured for each pulse."""
    x_a, p_a, y_b = (np.asarray(a, dtype=float) for a in (x_a, p_a, y_b))
    basis = np.asarray(basis)
    if not len(x_a) == len(p_a) == len(basis) == len(y_b):
        raise ValueError("sift inputs must have equal lengths")
    alice = np.where(basis == BASIS_X, x_a, p_a)
    return SiftedPairs(alice=alice, bob=y_b.copy(), basis=basis.copy())


def remap(x_a, p_a, phi0: float):
    """Rotate Alice's pairs by the interferometer phase.

    ``X' = X cos(phi0) + P sin(phi0)``, ``P' = -X sin(phi0) + P cos(phi0)``.
    """
    return rotate(np.asarray(x_a, dtype=float), np.asarray(p_a, dtype=float), phi0)


class DCResult(NamedTuple):
    corrected: np.ndarray
    x0: float
    p0: float
    x0_se: float
    p0_se: float


def subtract_dc(y_b, basis) -> DCResult:
    """Remove the per-basis mean of one frame of Bob's samples.

    A basis with no samples in the frame reports NaN for its offset.
    """
    y = np.asarray(y_b, dtype=float)
    basis = np.asarray(basis)
    out = y.copy()
    stats = []
    for b in (BASIS_X, BASIS_P):
        m = basis == b
        n = int(m.sum())
        if n == 0:
            stats.append((math.nan, math.nan))
            continue
        if n < 2:
            raise EstimationError(f"need >= 2 samples per basis for DC removal, got {n}")
        mean = float(y[m].mean())
        out[m] -= mean
        stats.append((mean, float(y[m].std(ddof=1)) / math.sqrt(n)))
    return DCResult(out, stats[0][0], stats[1][0], stats[0][1], stats[1][1])


class PhaseEstimate(NamedTuple):
    phi: float
    se: float
    gain: float


def _phase_regressors(x_a, p_a, basis):
    # for either basis the rotated-pair model reads y = g*(u cos(phi) + v sin(phi))
    is_x = basis == BASIS_X
    u = np.where(is_x, x_a, p_a)
    v = np.where(is_x, p_a, -x_a)
    return u, v


def estimate_phase(x_a, p_a, basis, y_b) -> PhaseEstimate:
    """Interferometer phase from pairs where Alice's full (X, P) is known.

    Bob's samples are regressed on Alice's two quadratures (centred per
    basis); the phase is the angle of the fitted coefficient pair and the gain
    its length. Whitening by Alice's sample covariance removes the scatter
    that a plain ``atan2(cov_P, cov_X)`` picks up from finite-sample
    cross-correlation between X_A and P_A.
    """
    x_a, p_a, y = (np.asarray(a, dtype=float) for a in (x_a, p_a, y_b))
    basis = np.asarray(basis)
    n = len(y)
    if n < MIN_PHASE_PAIRS:
        raise EstimationError(f"need >= {MIN_PHASE_PAIRS} pairs for phase estimation, got {n}")
    u, v = _phase_regressors(x_a, p_a, basis)
    u, v, y = u.copy(), v.copy(), y.copy()
    for b in (BASIS_X, BASIS_P):
        m = basis == b
        if m.any():
            u[m] -= u[m].mean()
            v[m] -= v[m].mean()
            y[m] -= y[m].mean()
    A = np.column_stack([u, v])
    gram = A.T @ A
    if np.linalg.cond(gram) > 1e12 or np.trace(gram) == 0:
        raise EstimationError("degenerate Alice covariance; phase is unidentifiable")
    coef = np.linalg.solve(gram, A.T @ y)
    c, s = float(coef[0]), float(coef[1])
    gain = math.hypot(c, s)
    if gain == 0:
        raise EstimationError("no correlation between Alice and Bob")
    phi = math.atan2(s, c)
    resid = y - A @ coef
    n_groups = int((basis == BASIS_X).any()) + int((basis == BASIS_P).any())
    sigma2 = float(resid @ resid) / (n - 2 - n_groups)
    cov = sigma2 * np.linalg.inv(gram)
    perp = np.array([-s, c]) / gain
    se = math.sqrt(float(perp @ cov @ perp)) / gain
    return PhaseEstimate(phi, se, gain)


@dataclass(frozen=True)
class ChannelEstimate:
    """Transmittance and equivalent input noise estimated from sifted pairs."""

    eta_G: float
    eta_G_se: float
    chi: float
    chi_se: float
    residual_var: float
    residual_var_se: float
    n: int


def estimate_channel(pairs: SiftedPairs) -> ChannelEstimate:
    """Least-squares fit of ``bob = sqrt(eta*G) * alice + noise``.

    ``eta*G`` is the squared slope and ``chi`` is the residual variance
    referred to the input minus the unit shot noise.
    """
    a = np.asarray(pairs.alice, dtype=float)
    b = np.asarray(pairs.bob, dtype=float)
    n = len(b)
    if n < MIN_CHANNEL_PAIRS:
        raise EstimationError(f"need >= {MIN_CHANNEL_PAIRS} pairs, got {n}")
    ac = a - a.mean()
    bc = b - b.mean()
    saa = float(ac @ ac)
    if saa <= 0:
        raise EstimationError("Alice's values have zero variance")
    k = float(ac @ bc) / saa
    T = k * k
    if T <= 0:
        raise EstimationError("estimated eta*G is not positive")
    resid = bc - k * ac
    dof = n - 1 - max(1, pairs.centred_groups)
    R = float(resid @ resid) / dof
    R_se = R * math.sqrt(2.0 / dof)
    k_se = math.sqrt(R / saa)
    T_se = 2.0 * abs(k) * k_se
    chi = R / T - 1.0
    chi_se = math.hypot(R_se / T, R * T_se / T**2)
    return ChannelEstimate(T, T_se, chi, chi_se, R, R_se, n)


def estimate_transmission(pairs: SiftedPairs) -> float:
    """Squared regression slope of Bob's samples on Alice's values."""
    return estimate_channel(pairs).eta_G


def estimate_chi(pairs: SiftedPairs, eta_G: float) -> float:
    """Equivalent input noise given a transmittance estimate."""
    if not eta_G > 0:
        raise EstimationError(f"eta_G must be > 0, got {eta_G}")
    a = np.asarray(pairs.alice, dtype=float)
    b = np.asarray(pairs.bob, dtype=float)
    r = (b - b.mean()) - math.sqrt(eta_G) * (a - a.mean())
    return float(r.var(ddof=1)) / eta_G - 1.0


@dataclass(frozen=True)
class BudgetEstimate:
    """Excess-noise split; ``flags`` lists any component clamped at zero."""

    chi: float
    chi_vac: float
    epsilon: float
    epsilon_A: float
    N_Bob: float
    N_el: float
    N_leak: float
    flags: tuple[str, ...] = ()


def noise_budget(
    chi: float, eta_G: float, delta: float, V_A: float, N_el: float
) -> BudgetEstimate:
    """Split an estimated ``chi`` into its vacuum and excess components.

    ``epsilon_A = V_A*delta``; ``epsilon = chi - chi_vac``;
    ``N_Bob = (epsilon - epsilon_A)*eta_G``; ``N_leak = N_Bob - N_el``.
    Negative components, which statistical noise can produce, are clamped to
    zero and named in ``flags``; the additive identities then no longer hold
    for the clamped terms.
    """
    for name, v in (("chi", chi), ("eta_G", eta_G), ("delta", delta), ("V_A", V_A), ("N_el", N_el)):
        if not math.isfinite(v):
            raise EstimationError(f"{name} must be finite, got {v!r}")
    if eta_G <= 0:
        raise EstimationError(f"eta_G must be > 0, got {eta_G}")
    chi_vac = (1.0 - eta_G) / eta_G
    flags = []

    def clamp(name, v):
        if v < 0:
            flags.append(f"{name}<0 clamped ({v:.3g})")
            return 0.0
        return v

    eps_A = clamp("epsilon_A", V_A * delta)
    eps = clamp("epsilon", chi - chi_vac)
    n_bob = clamp("N_Bob", (eps - eps_A) * eta_G)
    n_leak = clamp("N_leak", n_bob - N_el)
    return BudgetEstimate(chi, chi_vac, eps, eps_A, n_bob, N_el, n_leak, tuple(flags))


@dataclass(frozen=True)
class EstimationReport:
    """Estimated parameters of one session with standard errors."""

    V_A: float
    eta_G: float
    eta_G_se: float
    chi: float
    chi_se: float
    chi_vac: float
    epsilon: float
    epsilon_se: float
    epsilon_A: float
    epsilon_A_se: float
    N_Bob: float
    N_Bob_se: float
    N_el: float
    N_leak: float
    N_leak_se: float
    delta: float
    delta_se: float
    n_key_pairs: int
    n_disclosed: int
    phi0: tuple[float, ...]
    phi0_se: tuple[float, ...]
    x0: tuple[float, ...]
    p0: tuple[float, ...]
    x0_se: tuple[float, ...]
    p0_se: tuple[float, ...]
    flags: tuple[str, ...] = field(default=())

    @property
    def n_le_eff(self) -> tuple[float, ...]:
        """Per-frame effective leakage photon number from the DC offsets."""
        return tuple(
            (x if math.isfinite(x) else 0.0) ** 2 + (p if math.isfinite(p) else 0.0) ** 2
            for x, p in zip(self.x0, self.p0)
        )

    def scalars(self) -> dict[str, float]:
        keys = (
            "V_A eta_G eta_G_se chi chi_se chi_vac epsilon epsilon_se epsilon_A "
            "epsilon_A_se N_Bob N_Bob_se N_el N_leak N_leak_se delta delta_se "
            "n_key_pairs n_disclosed"
        ).split()
        d = {k: getattr(self, k) for k in keys}
        d["n_le_eff_mean"] = float(np.mean(self.n_le_eff))
        return d

    def to_text(self) -> str:
        lines = [f"{k}={_fmt(v)}" for k, v in self.scalars().items()]
        lines += [f"flag={f}" for f in self.flags]
        return "\n".join(lines) + "\n"

    def write_frames_csv(self, path: str | Path) -> Path:
        path = Path(path)
        rows = ["frame_index,phi0_hat,phi0_se,X0_hat,X0_se,P0_hat,P0_se,n_le_eff_hat"]
        for i, vals in enumerate(
            zip(self.phi0, self.phi0_se, self.x0, self.x0_se, self.p0, self.p0_se, self.n_le_eff)
        ):
            rows.append(",".join([str(i)] + [_fmt(v) for v in vals]))
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path


def _fmt(v) -> str:
    return format(v, ".9g") if isinstance(v, (float, np.floating)) else str(v)


def _disclosure_mask(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    k = max(MIN_PHASE_PAIRS, int(round(fraction * n)))
    if k >= n:
        raise EstimationError(
            f"frame of {n} pulses too small to disclose {k} and keep key-bearing pairs"
        )
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=k, replace=False)] = True
    return mask


@dataclass(frozen=True)
class _Prepared:
    pairs: SiftedPairs
    phi: list
    phi_se: list
    dc: list
    n_disclosed: int


def _prepare(
    session: SessionData, disclose_fraction: float, seed: int | None, apply_remap: bool
) -> _Prepared:
    if not 0.0 < disclose_fraction < 1.0:
        raise EstimationError("disclose_fraction must lie in (0,1)")
    if seed is None:
        seed = session.config.rng_seed
    rng = np.random.default_rng([seed, _DISCLOSE_SALT])
    alice, bob, basis = [], [], []
    phis, phi_ses, dcs = [], [], []
    n_disc = 0
    n_groups = 0
    for f in session.frames:
        dc = subtract_dc(f.y_b, f.basis)
        dcs.append(dc)
        mask = _disclosure_mask(len(f), disclose_fraction, rng)
        n_disc += int(mask.sum())
        est = estimate_phase(f.x_a[mask], f.p_a[mask], f.basis[mask], dc.corrected[mask])
        phis.append(est.phi)
        phi_ses.append(est.se)
        keep = ~mask
        x, p = f.x_a[keep], f.p_a[keep]
        if apply_remap:
            x, p = remap(x, p, est.phi)
        s = sift(x, p, f.basis[keep], dc.corrected[keep])
        # DC removal also strips the signal's sample mean in each basis group;
        # centre both sides over the same kept pulses so the means cancel
        a, y = s.alice.copy(), s.bob.copy()
        for b in (BASIS_X, BASIS_P):
            m = s.basis == b
            if m.any():
                a[m] -= a[m].mean()
                y[m] -= y[m].mean()
                n_groups += 1
        alice.append(a)
        bob.append(y)
        basis.append(s.basis)
    pairs = SiftedPairs(
        np.concatenate(alice), np.concatenate(bob), np.concatenate(basis), n_groups
    )
    return _Prepared(pairs, phis, phi_ses, dcs, n_disc)


def estimate_session(
    session: SessionData,
    delta: float,
    delta_se: float = 0.0,
    N_el: float | None = None,
    disclose_fraction: float = DEFAULT_DISCLOSE_FRACTION,
    seed: int | None = None,
    apply_remap: bool = True,
) -> EstimationReport:
    """Run the full estimation pipeline on a simulated session.

    Parameters
    ----------
    session : SessionData
    delta : float
        Calibrated ratio ``epsilon_A / V_A`` (see :func:`calibrate_delta`).
    delta_se : float
        Its standard error, propagated into ``epsilon_A`` and ``N_Bob``.
    N_el : float, optional
        Detector electrical noise, a trusted detector calibration. Defaults
        to the session config value.
    disclose_fraction : float
        Fraction of each frame disclosed for phase estimation. Disclosed
        pulses are left out of the ``eta*G`` and ``chi`` estimates.
    seed : int, optional
        Seed for choosing disclosed pulses; defaults to the session seed.
    apply_remap : bool
        Rotate Alice's data by the estimated phase before sifting.
    """
    V_A = session.config.params.V_A
    if N_el is None:
        N_el = session.config.n_el
    prep = _prepare(session, disclose_fraction, seed, apply_remap)
    ch = estimate_channel(prep.pairs)
    bud = noise_budget(ch.chi, ch.eta_G, delta, V_A, N_el)

    T, T_se, R, R_se = ch.eta_G, ch.eta_G_se, ch.residual_var, ch.residual_var_se
    eps_A_se = V_A * delta_se
    eps_se = math.hypot(R_se / T, (R - 1.0) * T_se / T**2)
    n_bob_se = math.sqrt(R_se**2 + (bud.epsilon_A * T_se) ** 2 + (T * eps_A_se) ** 2)

    return EstimationReport(
        V_A=V_A,
        eta_G=T,
        eta_G_se=T_se,
        chi=ch.chi,
        chi_se=ch.chi_se,
        chi_vac=bud.chi_vac,
        epsilon=bud.epsilon,
        epsilon_se=eps_se,
        epsilon_A=bud.epsilon_A,
        epsilon_A_se=eps_A_se,
        N_Bob=bud.N_Bob,
        N_Bob_se=n_bob_se,
        N_el=N_el,
        N_leak=bud.N_leak,
        N_leak_se=n_bob_se,
        delta=delta,
        delta_se=delta_se,
        n_key_pairs=ch.n,
        n_disclosed=prep.n_disclosed,
        phi0=tuple(prep.phi),
        phi0_se=tuple(prep.phi_se),
        x0=tuple(d.x0 for d in prep.dc),
        p0=tuple(d.p0 for d in prep.dc),
        x0_se=tuple(d.x0_se for d in prep.dc),
        p0_se=tuple(d.p0_se for d in prep.dc),
        flags=bud.flags,
    )


@dataclass(frozen=True)
class CalibrationResult:
    delta: float
    delta_se: float
    chi: float
    eta_G: float
    V_A: float

    def epsilon_A(self, V_A: float) -> float:
        """Implied outside-Bob excess noise at another modulation variance."""
        return V_A * self.delta


def calibrate_delta(
    session: SessionData,
    subtract_vacuum: bool = True,
    disclose_fraction: float = DEFAULT_DISCLOSE_FRACTION,
    seed: int | None = None,
) -> CalibrationResult:
    """Estimate ``delta = epsilon_A / V_A`` from a high-modulation session.

    The session must be run at ``V_A >= 1e4`` with electrical and leakage
    noise off, so the excess noise is dominated by ``V_A * delta``. With
    ``subtract_vacuum`` the estimated vacuum noise ``(1 - eta*G)/(eta*G)`` is
    removed first; otherwise ``delta = chi / V_A``, which carries a bias of
    ``chi_vac / V_A``.
    """
    cfg = session.config
    V_A = cfg.params.V_A
    if V_A < MIN_CALIBRATION_V_A:
        raise EstimationError(
            f"calibration needs V_A >= {MIN_CALIBRATION_V_A:g}, got {V_A:g}"
        )
    if cfg.n_el != 0 or cfg.N_leak != 0:
        raise EstimationError("calibration session must have electrical and leakage noise off")
    prep = _prepare(session, disclose_fraction, seed, apply_remap=True)
    ch = estimate_channel(prep.pairs)
    if subtract_vacuum:
        T, T_se, R, R_se = ch.eta_G, ch.eta_G_se, ch.residual_var, ch.residual_var_se
        excess = (R - 1.0) / T
        excess_se = math.hypot(R_se / T, (R - 1.0) * T_se / T**2)
    else:
        excess, excess_se = ch.chi, ch.chi_se
    return CalibrationResult(excess / V_A, excess_se / V_A, ch.chi, ch.eta_G, V_A)


def key_rates_from_report(
    report: EstimationReport,
    eta: float,
    betas=(1.0, 0.898),
    models=MODELS,
) -> list[KeyRateResult]:
    """Key rates implied by estimated parameters.

    Only the product ``eta*G`` is observable from the data; ``eta`` is taken
    as a trusted calibration of Bob's device and ``G = eta_G / eta``.
    """
    G = report.eta_G / eta
    if not 0 < G <= 1:
        raise DomainError(f"implied G={G:.6g} outside (0,1]")
    params = SystemParameters(V_A=report.V_A, G=G, eta=eta, beta=max(betas))
    budget = NoiseBudget.compose(eta, G, report.epsilon_A, report.N_el, report.N_leak)
    return [secure_key_rate(params, budget, m, beta=b) for m in models for b in betas]


def epsilon_A_from_chi(chi: float, eta_G: float, N_Bob: float) -> float:
    """Outside-Bob excess noise implied by ``chi`` for a given transmittance."""
    return chi - (1.0 - eta_G) / eta_G - N_Bob / eta_G


def required_transmission_accuracy(
    chi: float = 2.25,
    eta_G: float = 0.44 * 0.758,
    N_Bob: float = 0.065,
    epsilon_A_accuracy: float = 0.01,
    h: float = 1e-6,
) -> float:
    """Absolute error in ``eta*G`` that shifts the inferred ``epsilon_A`` by
    ``epsilon_A_accuracy``, from a central-difference derivative."""
    d = (epsilon_A_from_chi(chi, eta_G + h, N_Bob) - epsilon_A_from_chi(chi, eta_G - h, N_Bob)) / (
        2.0 * h
    )
    return epsilon_A_accuracy / abs(d)
