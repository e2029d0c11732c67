"""Analytic key-rate mathematics for Gaussian-modulated coherent-state QKD.

All quadrature variances are in shot-noise units (vacuum variance = 1).
Information quantities are in bits per pulse (base-2 logarithms).

The noise model splits the equivalent input noise into a vacuum part set by
the total transmittance ``eta * G`` and an excess part::

    chi     = chi_vac + epsilon
    chi_vac = (1 - eta*G) / (eta*G)
    epsilon = epsilon_A + N_Bob / (eta*G)
    N_Bob   = N_el + N_leak

``epsilon_A`` is referred to the channel input; ``N_Bob`` and its components
are referred to Bob's output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

DEFAULT_FIBER_LOSS_DB_PER_KM = 0.21

#: Tolerance for accepting a caller-supplied total excess noise.
EPSILON_CONSISTENCY_TOL = 1e-9

Model = Literal["general", "realistic"]
MODELS: tuple[str, ...] = ("general", "realistic")


class DomainError(ValueError):
    """An input lies outside the domain where a formula is defined."""


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


def _check_unit_interval(name: str, v: float) -> None:
    _check_finite(**{name: v})
    if not 0.0 < v <= 1.0:
        raise DomainError(f"{name} must lie in (0,1], got {v!r}")


def _check_nonneg(**values: float) -> None:
    _check_finite(**values)
    for name, v in values.items():
        if v < 0:
            raise DomainError(f"{name} must be >= 0, got {v!r}")


def _transmittance(eta: float, G: float) -> float:
    _check_finite(eta=eta, G=G)
    T = eta * G
    if T <= 0:
        raise DomainError(f"eta*G must be > 0, got {T!r}")
    return T


@dataclass(frozen=True)
class SystemParameters:
    """Physical and protocol parameters of one link.

    Attributes
    ----------
    V_A : float
        Alice's modulation variance, shot-noise units.
    G : float
        Channel transmittance, in (0, 1].
    eta : float
        Total efficiency of Bob's device, in (0, 1].
    beta : float
        Reverse-reconciliation efficiency, in (0, 1].
    fiber_loss : float
        Fiber attenuation in dB/km, used when ``G`` is derived from a length.
    """

    V_A: float = 16.9
    G: float = 0.758
    eta: float = 0.44
    beta: float = 0.898
    fiber_loss: float = DEFAULT_FIBER_LOSS_DB_PER_KM

    def __post_init__(self) -> None:
        _check_nonneg(V_A=self.V_A, fiber_loss=self.fiber_loss)
        _check_unit_interval("G", self.G)
        _check_unit_interval("eta", self.eta)
        _check_unit_interval("beta", self.beta)

    @property
    def V(self) -> float:
        """Quadrature variance of Alice's prepared state, ``V_A + 1``."""
        return self.V_A + 1.0

    @property
    def eta_G(self) -> float:
        return self.eta * self.G


@dataclass(frozen=True)
class NoiseBudget:
    """Decomposition of the equivalent input noise.

    Build one with :meth:`compose` so the identities between fields hold.
    """

    chi_vac: float
    epsilon_A: float
    N_Bob: float
    N_el: float
    N_leak: float
    epsilon: float
    chi: float

    def __post_init__(self) -> None:
        _check_nonneg(
            chi_vac=self.chi_vac,
            epsilon_A=self.epsilon_A,
            N_Bob=self.N_Bob,
            N_el=self.N_el,
            N_leak=self.N_leak,
            epsilon=self.epsilon,
            chi=self.chi,
        )

    @classmethod
    def compose(
        cls,
        eta: float,
        G: float,
        epsilon_A: float,
        N_el: float = 0.0,
        N_leak: float = 0.0,
    ) -> "NoiseBudget":
        """Assemble a consistent budget from its independent components."""
        _check_nonneg(epsilon_A=epsilon_A, N_el=N_el, N_leak=N_leak)
        N_Bob = N_el + N_leak
        chi_vac = vacuum_noise(eta, G)
        eps = total_excess_noise(epsilon_A, N_Bob, eta, G)
        return cls(
            chi_vac=chi_vac,
            epsilon_A=epsilon_A,
            N_Bob=N_Bob,
            N_el=N_el,
            N_leak=N_leak,
            epsilon=eps,
            chi=chi_vac + eps,
        )


@dataclass(frozen=True)
class KeyRateResult:
    """Mutual informations and the resulting secure key rate.

    ``delta_I_raw`` keeps the sign of ``beta*I_AB - I_BE``; ``delta_I`` is
    clamped at zero. ``V_B`` and ``V_B_given_E`` are Bob's variance and the
    conditional variance implied by ``I_BE = 0.5*log2(V_B / V_B_given_E)``.
    """

    model: str
    beta: float
    I_AB: float
    I_BE: float
    delta_I_raw: float
    delta_I: float
    V_B: float
    V_B_given_E: float


def fiber_transmittance(
    length_km: float, loss_db_per_km: float = DEFAULT_FIBER_LOSS_DB_PER_KM
) -> float:
    """Power transmittance of a fiber span, ``10**(-length*loss/10)``."""
    _check_nonneg(length_km=length_km, loss_db_per_km=loss_db_per_km)
    return 10.0 ** (-length_km * loss_db_per_km / 10.0)


def vacuum_noise(eta: float, G: float) -> float:
    """Input-referred vacuum noise ``(1 - eta*G) / (eta*G)``."""
    T = _transmittance(eta, G)
    return (1.0 - T) / T


def total_excess_noise(epsilon_A: float, N_Bob: float, eta: float, G: float) -> float:
    """Input-referred excess noise, ``epsilon_A + N_Bob / (eta*G)``."""
    T = _transmittance(eta, G)
    return epsilon_A + N_Bob / T


def equivalent_input_noise(eta: float, G: float, epsilon_A: float, N_Bob: float) -> float:
    """Total equivalent input noise ``chi``; vacuum plus excess."""
    return vacuum_noise(eta, G) + total_excess_noise(epsilon_A, N_Bob, eta, G)


def mutual_info_AB(V_A: float, chi: float) -> float:
    """Alice-Bob mutual information, ``0.5*log2((V + chi) / (1 + chi))``."""
    _check_nonneg(V_A=V_A, chi=chi)
    V = V_A + 1.0
    return 0.5 * math.log2((V + chi) / (1.0 + chi))


def mutual_info_BE_general(V_A: float, eta: float, G: float, chi: float) -> float:
    """Bob-Eve information when Eve controls all loss and noise.

    Evaluates ``0.5*log2((eta*G)**2 * (V + chi) * (1/V + chi))``. The value
    may be negative for very small ``chi`` and is returned unmodified.
    """
    _check_nonneg(V_A=V_A, chi=chi)
    T = _transmittance(eta, G)
    V = V_A + 1.0
    arg = T * T * (V + chi) * (1.0 / V + chi)
    if arg <= 0:
        raise DomainError(f"log argument must be > 0, got {arg!r}")
    return 0.5 * math.log2(arg)


def conditional_variance_realistic(
    V_A: float, eta: float, G: float, epsilon_A: float, N_Bob: float
) -> float:
    """Bob's variance conditioned on Eve when Bob's device is trusted."""
    _check_nonneg(V_A=V_A, epsilon_A=epsilon_A, N_Bob=N_Bob)
    _check_finite(eta=eta, G=G)
    V = V_A + 1.0
    denom = 1.0 - G + G * (epsilon_A + 1.0 / V)
    if denom <= 0:
        raise DomainError(f"1 - G + G*(epsilon_A + 1/V) must be > 0, got {denom!r}")
    return eta / denom + (1.0 - eta) + N_Bob


def mutual_info_BE_realistic(
    V_A: float,
    eta: float,
    G: float,
    epsilon_A: float,
    N_Bob: float,
    epsilon: float | None = None,
) -> float:
    """Bob-Eve information when Eve cannot touch Bob's device.

    ``epsilon`` is always recomputed from ``(epsilon_A, N_Bob, eta*G)``; a
    caller-supplied value that disagrees by more than
    :data:`EPSILON_CONSISTENCY_TOL` raises :class:`DomainError`.
    """
    eps = total_excess_noise(epsilon_A, N_Bob, eta, G)
    if epsilon is not None and abs(epsilon - eps) > EPSILON_CONSISTENCY_TOL:
        raise DomainError(
            f"epsilon={epsilon!r} inconsistent with epsilon_A + N_Bob/(eta*G) = {eps!r}"
        )
    T = eta * G
    V_B = T * V_A + 1.0 + T * eps
    V_BE = conditional_variance_realistic(V_A, eta, G, epsilon_A, N_Bob)
    ratio = V_B / V_BE
    if ratio <= 0:
        raise DomainError(f"log argument must be > 0, got {ratio!r}")
    return 0.5 * math.log2(ratio)


def _check_budget_matches(params: SystemParameters, budget: NoiseBudget) -> None:
    chi_vac = vacuum_noise(params.eta, params.G)
    eps = total_excess_noise(budget.epsilon_A, budget.N_Bob, params.eta, params.G)
    if abs(chi_vac - budget.chi_vac) > EPSILON_CONSISTENCY_TOL or abs(
        eps - budget.epsilon
    ) > EPSILON_CONSISTENCY_TOL:
        raise DomainError("noise budget was composed for a different eta*G")


def secure_key_rate(
    params: SystemParameters,
    budget: NoiseBudget,
    model: str = "realistic",
    beta: float | None = None,
) -> KeyRateResult:
    """Secure key rate ``beta*I_AB - I_BE`` under the chosen eavesdropper model.

    Parameters
    ----------
    params : SystemParameters
    budget : NoiseBudget
        Must have been composed for ``params.eta`` and ``params.G``.
    model : {"general", "realistic"}
    beta : float, optional
        Overrides ``params.beta``.
    """
    if model not in MODELS:
        raise DomainError(f"model must be one of {MODELS}, got {model!r}")
    if beta is None:
        beta = params.beta
    else:
        _check_unit_interval("beta", beta)
    _check_budget_matches(params, budget)

    T = params.eta_G
    I_AB = mutual_info_AB(params.V_A, budget.chi)
    if model == "general":
        I_BE = mutual_info_BE_general(params.V_A, params.eta, params.G, budget.chi)
    else:
        I_BE = mutual_info_BE_realistic(
            params.V_A, params.eta, params.G, budget.epsilon_A, budget.N_Bob
        )
    V_B = T * (params.V + budget.chi)
    raw = beta * I_AB - I_BE
    return KeyRateResult(
        model=model,
        beta=beta,
        I_AB=I_AB,
        I_BE=I_BE,
        delta_I_raw=raw,
        # no modulation, no key; guards against rounding in I_BE near zero
        delta_I=0.0 if params.V_A == 0 else max(0.0, raw),
        V_B=V_B,
        V_B_given_E=V_B * 2.0 ** (-2.0 * I_BE),
    )
