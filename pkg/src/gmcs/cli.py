"""Command-line front end.

Usage::

    gmcs <mode> [--config PATH] [--out DIR] [--seed U64]

Modes: ``keyrate`` (distance sweep), ``leakage`` (LO-leakage analysis),
``simulate`` (Monte Carlo session + estimation) and ``calibrate`` (delta
calibration at high modulation variance).

The config file is flat ``key = value`` text, one setting per line, ``#``
starts a comment. Absent keys take the defaults in :data:`CONFIG_KEYS`, which
reproduce the 5 km experiment. ``GMCS_SEED`` overrides the config seed and
``--seed`` overrides both.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from . import keyrate as kr
from . import leakage as lk
from .postprocess import (
    calibrate_delta,
    estimate_session,
    key_rates_from_report,
)
from .simulator import ScenarioConfig, run_session, write_session_csv

MODES = ("keyrate", "leakage", "simulate", "calibrate")
SEED_ENV = "GMCS_SEED"


class ConfigFileError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key={key}")
        if line is not None:
            where.append(f"line={line}")
        super().__init__(" ".join(where + [message]))


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s, 0)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _unit(v):
    return None if 0 < v <= 1 else "must lie in (0,1]"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _positive(v):
    return None if v > 0 else "must be > 0"


def _open_unit(v):
    return None if 0 < v < 1 else "must lie in (0,1)"


def _u64(v):
    return None if 0 <= v < 2**64 else "must be an unsigned 64-bit integer"


def _min(n):
    return lambda v: None if v >= n else f"must be >= {n}"


def _betas(v):
    return None if v and all(0 < b <= 1 for b in v) else "entries must lie in (0,1]"


def _models(v):
    bad = [m for m in v if m not in kr.MODELS]
    return None if v and not bad else f"entries must be among {','.join(kr.MODELS)}"


@dataclass(frozen=True)
class KeySpec:
    parse: Callable[[str], object]
    default: object
    check: Callable[[object], str | None] | None
    doc: str


CONFIG_KEYS: dict[str, KeySpec] = {
    # link and protocol
    "V_A": KeySpec(_float, 16.9, _nonneg, "modulation variance (shot-noise units)"),
    "G": KeySpec(_float, 0.758, _unit, "channel transmittance"),
    "eta": KeySpec(_float, 0.44, _unit, "Bob's total efficiency"),
    "beta": KeySpec(_float, 0.898, _unit, "reconciliation efficiency"),
    "fiber_loss": KeySpec(_float, 0.21, _nonneg, "fiber loss, dB/km"),
    # noise sources
    "delta": KeySpec(_float, 0.0033, _nonneg, "epsilon_A / V_A"),
    "n_el": KeySpec(_float, 0.045, _nonneg, "electrical noise (output-referred)"),
    "n_le_eff": KeySpec(_float, 6.0, _nonneg, "effective leakage photons per pulse"),
    "phi_le_0": KeySpec(_float, 0.7, None, "mean LO-leakage phase, rad"),
    "gamma": KeySpec(_float, 0.0033, _nonneg, "leakage noise per effective photon"),
    # frames
    "frame_size": KeySpec(_int, 4000, _min(2), "pulses per frame"),
    "x_count": KeySpec(_int, 1980, _nonneg, "X measurements per frame"),
    "p_count": KeySpec(_int, 2020, _nonneg, "P measurements per frame"),
    "frame_duration": KeySpec(_float, 0.040, _nonneg, "frame duration, s"),
    "phase_drift_rate": KeySpec(_float, 0.016, None, "interferometer drift, rad/s"),
    "initial_phase": KeySpec(_float, 0.0, None, "phase at t=0, rad"),
    "n_frames": KeySpec(_int, 10, _min(1), "frames per session"),
    "seed": KeySpec(_int, 20080101, _u64, "RNG seed"),
    "disclose_fraction": KeySpec(_float, 0.1, _open_unit, "fraction disclosed for phase"),
    # calibration
    "calib_V_A": KeySpec(_float, 40000.0, _min(1e4), "modulation variance for delta calibration"),
    "calib_n_frames": KeySpec(_int, 10, _min(1), "frames in the calibration session"),
    # keyrate sweep
    "sweep_start": KeySpec(_float, 0.0, _nonneg, "first distance, km"),
    "sweep_stop": KeySpec(_float, 50.0, _nonneg, "last distance, km"),
    "sweep_step": KeySpec(_float, 0.5, _positive, "distance step, km"),
    "sweep_betas": KeySpec(_floats, (1.0, 0.898), _betas, "comma-separated beta list"),
    "sweep_models": KeySpec(_words, ("general", "realistic"), _models, "comma-separated models"),
    # leakage analysis
    "leak_n_le_time": KeySpec(_float, 1e8, _nonneg, "leakage photons, time multiplexing"),
    "leak_n_le_time_pol": KeySpec(_float, 1e5, _nonneg, "leakage photons, time+polarization"),
    "leak_target": KeySpec(_float, 0.02, _positive, "target N_leak"),
    "leak_fwhm": KeySpec(_float, 100e-9, _positive, "pulse FWHM, s"),
    "leak_delta_nu": KeySpec(_float, 55e6, _nonneg, "LO-leakage frequency offset, Hz"),
    "leak_dc_x": KeySpec(_float, math.sqrt(6.0), None, "measured X DC offset"),
    "leak_dc_p": KeySpec(_float, 0.0, None, "measured P DC offset"),
    "leak_n_lo": KeySpec(_float, 8e7, _positive, "LO photons per pulse"),
    "leak_n_bob": KeySpec(_float, 0.065, _nonneg, "measured N_Bob for gamma estimate"),
    "el_noise_db": KeySpec(_float, 13.4, None, "electrical noise below shot noise, dB"),
}


@dataclass(frozen=True)
class SweepSpec:
    start: float
    stop: float
    step: float
    betas: tuple[float, ...]
    models: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ConfigFileError("must be > 0", key="sweep_step")
        if self.start > self.stop:
            raise ConfigFileError("sweep_start must be <= sweep_stop", key="sweep_start")

    def distances(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return [self.start + i * self.step for i in range(n + 1)]


@dataclass(frozen=True)
class RunConfig:
    values: dict
    scenario: ScenarioConfig
    sweep: SweepSpec

    def __getitem__(self, key):
        return self.values[key]


def parse_config_text(text: str) -> RunConfig:
    values = {k: s.default for k, s in CONFIG_KEYS.items()}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError("expected key = value", line=lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in CONFIG_KEYS:
            raise ConfigFileError("unknown key", key=key, line=lineno)
        spec = CONFIG_KEYS[key]
        try:
            v = spec.parse(val)
        except ValueError:
            raise ConfigFileError(f"malformed value {val!r}", key=key, line=lineno) from None
        if spec.check is not None and (msg := spec.check(v)) is not None:
            raise ConfigFileError(f"{key} {msg}", key=key, line=lineno)
        values[key] = v
        lines[key] = lineno
    return build_run_config(values, lines)


def build_run_config(values: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}
    try:
        params = kr.SystemParameters(
            V_A=values["V_A"],
            G=values["G"],
            eta=values["eta"],
            beta=values["beta"],
            fiber_loss=values["fiber_loss"],
        )
        scenario = ScenarioConfig(
            params=params,
            delta=values["delta"],
            n_el=values["n_el"],
            n_le_eff=values["n_le_eff"],
            phi_le_0=values["phi_le_0"],
            gamma=values["gamma"],
            frame_size=values["frame_size"],
            x_count=values["x_count"],
            p_count=values["p_count"],
            frame_duration=values["frame_duration"],
            phase_drift_rate=values["phase_drift_rate"],
            initial_phase=values["initial_phase"],
            rng_seed=values["seed"],
            n_frames=values["n_frames"],
        )
    except ValueError as e:
        key = "frame_size" if "x_count" in str(e) else None
        raise ConfigFileError(str(e), key=key, line=lines.get(key)) from None
    sweep = SweepSpec(
        values["sweep_start"],
        values["sweep_stop"],
        values["sweep_step"],
        tuple(values["sweep_betas"]),
        tuple(values["sweep_models"]),
    )
    return RunConfig(dict(values), scenario, sweep)


def parse_config(path: str | Path | None) -> RunConfig:
    """Read a flat ``key = value`` config; ``None`` gives all defaults."""
    if path is None:
        return parse_config_text("")
    p = Path(path)
    if not p.is_file():
        raise ConfigFileError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def _fmt(v) -> str:
    return format(v, ".9g") if isinstance(v, float) else str(v)


def _write_kv(path: Path, items) -> Path:
    path.write_text("".join(f"{k}={_fmt(v)}\n" for k, v in items), encoding="utf-8")
    return path


KEYRATE_HEADER = ("distance_km", "G", "model", "beta", "I_AB", "I_BE", "delta_I", "delta_I_raw")


def run_keyrate_sweep(
    sweep: SweepSpec,
    params: kr.SystemParameters,
    epsilon_A: float,
    N_el: float,
    N_leak: float,
) -> list[tuple]:
    """Key rate versus fiber length with Bob's noise held fixed.

    ``G`` comes from the fiber loss at each distance and ``epsilon`` is
    recomposed for that ``G``. Rows are ordered by (distance, model, beta).
    """
    rows = []
    for d in sweep.distances():
        G = kr.fiber_transmittance(d, params.fiber_loss)
        p = replace(params, G=G)
        try:
            budget = kr.NoiseBudget.compose(p.eta, G, epsilon_A, N_el, N_leak)
            for model in sweep.models:
                for beta in sweep.betas:
                    r = kr.secure_key_rate(p, budget, model, beta=beta)
                    rows.append((d, G, model, beta, r.I_AB, r.I_BE, r.delta_I, r.delta_I_raw))
        except kr.DomainError as e:
            raise kr.DomainError(f"distance_km={d:g}: {e}") from None
    return rows


def write_keyrate_csv(rows, path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEYRATE_HEADER)
        for row in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, float) else v for v in row])
    return path


def _operating_point_rates(cfg: RunConfig):
    sc = cfg.scenario
    b = sc.budget
    return [
        kr.secure_key_rate(sc.params, b, m, beta=beta)
        for m in kr.MODELS
        for beta in cfg.sweep.betas
    ]


def run_keyrate(cfg: RunConfig, out: Path) -> list[tuple]:
    sc = cfg.scenario
    rows = run_keyrate_sweep(cfg.sweep, sc.params, sc.epsilon_A, sc.n_el, sc.N_leak)
    write_keyrate_csv(rows, out / "keyrate.csv")
    b = sc.budget
    print(f"operating point G={sc.params.G:g}: chi={b.chi:.4f} epsilon={b.epsilon:.4f} "
          f"epsilon_A={b.epsilon_A:.4f} N_Bob={b.N_Bob:.4f}")
    for r in _operating_point_rates(cfg):
        print(f"  R_{r.model}(beta={r.beta:g}) = {r.delta_I:.4f}  (raw {r.delta_I_raw:+.4f})")
    return rows


def leakage_report(cfg: RunConfig) -> list[tuple[str, object]]:
    """Both multiplexing cases as ordered key/value pairs."""
    v = cfg.values
    sigma_t = lk.sigma_from_fwhm(v["leak_fwhm"])
    items: list[tuple[str, object]] = [("sigma_t_s", sigma_t)]
    for tag, n_le in (("time", v["leak_n_le_time"]), ("time_pol", v["leak_n_le_time_pol"])):
        req = lk.required_delay(n_le, v["leak_target"], sigma_t)
        items += [
            (f"{tag}.n_le", n_le),
            (f"{tag}.N_leak_target", v["leak_target"]),
            (f"{tag}.delay_s", req.delay),
            (f"{tag}.fiber_length_m", req.fiber_length),
            (f"{tag}.no_delay_needed", req.no_delay_needed),
        ]
    sigma_nu = lk.transform_limited_sigma_freq(v["leak_fwhm"])
    items += [
        ("freq.fwhm_nu_hz", lk.transform_limited_fwhm_freq(v["leak_fwhm"])),
        ("freq.sigma_nu_hz", sigma_nu),
        ("freq.delta_nu_hz", v["leak_delta_nu"]),
        ("freq.alpha", lk.overlap_factor(v["leak_delta_nu"], sigma_nu)),
        ("freq.log10_alpha", lk.log10_overlap_factor(v["leak_delta_nu"], sigma_nu)),
    ]
    est = lk.dc_leakage(v["leak_dc_x"], v["leak_dc_p"], v["gamma"])
    items += [
        ("dc.X0", v["leak_dc_x"]),
        ("dc.P0", v["leak_dc_p"]),
        ("dc.n_le_eff", est.n_le_eff),
        ("dc.phi_le_0", est.phi_le_0),
        ("dc.gamma", est.gamma),
        ("dc.N_leak", est.N_leak),
    ]
    if est.n_le_eff > 0:
        items.append(("dc.extinction_ratio_db", lk.extinction_ratio_db(v["leak_n_lo"], est.n_le_eff)))
        n_el = lk.electrical_noise_from_db(v["el_noise_db"])
        items += [
            ("noise.N_el", n_el),
            ("noise.N_Bob", v["leak_n_bob"]),
            ("noise.gamma_from_split", lk.gamma_from_noise_split(v["leak_n_bob"], n_el, est.n_le_eff)),
        ]
    return items


def run_leakage(cfg: RunConfig, out: Path) -> list[tuple[str, object]]:
    items = leakage_report(cfg)
    _write_kv(out / "leakage.txt", items)
    d = dict(items)
    for tag in ("time", "time_pol"):
        print(f"{tag}: n_le={d[f'{tag}.n_le']:g} -> delay {d[f'{tag}.delay_s'] * 1e9:.1f} ns, "
              f"fiber {d[f'{tag}.fiber_length_m']:.1f} m")
    print(f"freq: sigma_nu={d['freq.sigma_nu_hz'] / 1e6:.3f} MHz, "
          f"log10(alpha)={d['freq.log10_alpha']:.1f}")
    print(f"dc: n_le_eff={d['dc.n_le_eff']:.3f}, N_leak={d['dc.N_leak']:.4f}")
    return items


def calibration_scenario(cfg: RunConfig) -> ScenarioConfig:
    """High-modulation, leakage-free, electrical-noise-free variant of the scenario."""
    sc = cfg.scenario
    return replace(
        sc.with_params(V_A=cfg["calib_V_A"]),
        n_el=0.0,
        n_le_eff=0.0,
        n_frames=cfg["calib_n_frames"],
        rng_seed=(sc.rng_seed + 1) % 2**64,
    )


def run_calibrate(cfg: RunConfig, out: Path | None = None):
    cal = calibrate_delta(run_session(calibration_scenario(cfg)), disclose_fraction=cfg["disclose_fraction"])
    V_A = cfg.scenario.params.V_A
    items = [
        ("calib_V_A", cal.V_A),
        ("delta_hat", cal.delta),
        ("delta_se", cal.delta_se),
        ("chi_hat", cal.chi),
        ("eta_G_hat", cal.eta_G),
        ("V_A", V_A),
        ("epsilon_A", cal.epsilon_A(V_A)),
    ]
    if out is not None:
        _write_kv(out / "report.txt", items)
        print(f"delta_hat={cal.delta:.6f} +- {cal.delta_se:.6f}; "
              f"epsilon_A(V_A={V_A:g})={cal.epsilon_A(V_A):.4f}")
    return cal


def run_simulate(cfg: RunConfig, out: Path | None = None):
    """Calibrate delta, simulate the session, estimate, compute key rates."""
    cal = run_calibrate(cfg, None)
    session = run_session(cfg.scenario)
    report = estimate_session(
        session, cal.delta, cal.delta_se, disclose_fraction=cfg["disclose_fraction"]
    )
    rates = key_rates_from_report(report, cfg.scenario.params.eta, betas=cfg.sweep.betas)
    if out is not None:
        write_session_csv(session, out / "session.csv")
        report.write_frames_csv(out / "frames.csv")
        text = report.to_text() + "".join(
            f"R_{r.model}_beta_{r.beta:g}={_fmt(r.delta_I)}\n"
            f"R_{r.model}_beta_{r.beta:g}_raw={_fmt(r.delta_I_raw)}\n"
            for r in rates
        )
        (out / "report.txt").write_text(text, encoding="utf-8")
        print(f"eta_G_hat={report.eta_G:.5f} chi_hat={report.chi:.4f} "
              f"epsilon_hat={report.epsilon:.4f} N_Bob_hat={report.N_Bob:.4f}")
        for r in rates:
            print(f"  R_{r.model}(beta={r.beta:g}) = {r.delta_I:.4f}")
    return session, report, rates


def _resolve_seed(cfg: RunConfig, cli_seed: int | None) -> RunConfig:
    seed = None
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            seed = int(env, 0)
        except ValueError:
            raise ConfigFileError(f"malformed {SEED_ENV}={env!r}", key="seed") from None
    if cli_seed is not None:
        seed = cli_seed
    if seed is None:
        return cfg
    if (msg := _u64(seed)) is not None:
        raise ConfigFileError(f"seed {msg}", key="seed")
    values = dict(cfg.values, seed=seed)
    return build_run_config(values)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmcs", description="GMCS QKD modeling and simulation")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", default=None, help="flat key=value config file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="RNG seed (u64)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_seed(parse_config(args.config), args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        {"keyrate": run_keyrate, "leakage": run_leakage, "simulate": run_simulate,
         "calibrate": run_calibrate}[args.mode](cfg, out)
    except ConfigFileError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {type(e).__name__}: {' '.join(str(e).split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
