"""Scenario runner and reporting.

A scenario describes one experiment: a source state, an ordered chain of
polarization channels, a white-noise fraction (given directly or fitted to
a target concurrence), and a seeded measurement plan. Running it writes a
deterministic set of artifacts (density matrix JSON, count CSVs, fringe
CSVs, metrics summary and a manifest) suitable for plotting without
re-running.

Four named scenarios ship with the package, modeling an entangled-photon
source measured directly, through a fiber taper, through a taper-nanowire
junction with anisotropic coupling, and through the same junction with the
pump adjusted to pre-compensate that anisotropy.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from biphoton import bell, optics, sim, tomo
from biphoton.qstate import (DensityMatrix, PureState, bell_state, concurrence,
                             eigen_hermitian, schmidt_pure, to_density)

#: Coupler efficiencies of the taper-nanowire junction: the H-polarized
#: path transmits 40.3% absolute with an H:V ratio of 1.78.
NANOWIRE_ETA_H = 0.403
NANOWIRE_RATIO = 1.78
NANOWIRE_ETA_V = NANOWIRE_ETA_H / NANOWIRE_RATIO

#: Orientation of the Schmidt-form eigenstate observed behind the junction.
NANOWIRE_SCHMIDT_THETA = math.atan2(0.594, 0.801)

_FRINGE_GRID = np.deg2rad(np.arange(0.0, 180.0, 10.0))


@dataclass(frozen=True)
class ChannelSpec:
    """One channel-chain entry: kind, parameters and the arm it acts on."""

    kind: str
    params: dict = field(default_factory=dict)
    arm: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    source: str | dict
    channel_chain: tuple = ()
    noise_p: float | None = None
    noise_fit_concurrence: float | None = None
    fidelity_target: str | dict = "phi+"
    singles_extinction: float | None = None
    tomography_plan: str = sim.PLAN_HVDR16
    mean_pairs: float = 10_000
    seed: int = 0
    outputs: str = "out"
    bootstrap_replicas: int = 200

    def __post_init__(self):
        if self.seed is None or int(self.seed) < 0:
            raise ValueError("scenario needs a non-negative integer seed")
        if self.noise_p is not None and not 0.0 <= self.noise_p <= 1.0:
            raise ValueError("noise_p must lie in [0, 1]")
        if self.noise_p is not None and self.noise_fit_concurrence is not None:
            raise ValueError("give noise_p or noise_fit_concurrence, not both")
        if self.mean_pairs <= 0:
            raise ValueError("mean_pairs must be positive")


@dataclass(frozen=True)
class EfficiencyBudget:
    """Product of per-stage efficiencies, with an optional solved unknown.

    When a quoted value for the unknown stage is supplied, the report keeps
    the recomputed and quoted numbers side by side instead of reconciling
    them.
    """

    stages: tuple
    total: float
    solved_unknown: float | None = None
    quoted_unknown: float | None = None

    @property
    def quoted_gap(self) -> float | None:
        if self.solved_unknown is None or self.quoted_unknown is None:
            return None
        return self.solved_unknown - self.quoted_unknown

    def to_json_dict(self) -> dict:
        payload = {
            "stages": [{"name": name, "efficiency": eff} for name, eff in self.stages],
            "total": self.total,
        }
        if self.solved_unknown is not None:
            payload["solved_unknown"] = {"recomputed": self.solved_unknown}
            if self.quoted_unknown is not None:
                payload["solved_unknown"]["quoted"] = self.quoted_unknown
                payload["solved_unknown"]["recomputed_minus_quoted"] = self.quoted_gap
        return payload


def efficiency_budget(stages, solve_total: float | None = None,
                      quoted_unknown: float | None = None) -> EfficiencyBudget:
    """Multiply stage efficiencies; optionally solve for one missing stage.

    `stages` holds (name, efficiency) pairs or bare efficiencies, each in
    (0, 1]. With `solve_total`, the unknown stage is target / product and
    is reported next to `quoted_unknown` when one is given.
    """
    named = []
    for i, entry in enumerate(stages):
        if isinstance(entry, (tuple, list)):
            name, eff = entry
        else:
            name, eff = f"stage{i + 1}", entry
        eff = float(eff)
        if not 0.0 < eff <= 1.0:
            raise ValueError(f"stage efficiency must lie in (0, 1], got {eff!r}")
        named.append((str(name), eff))
    if not named:
        raise ValueError("budget needs at least one stage")
    total = float(np.prod([eff for _, eff in named]))
    solved = None if solve_total is None else float(solve_total) / total
    return EfficiencyBudget(tuple(named), total, solved, quoted_unknown)


def fit_noise(target_concurrence: float, base_state: DensityMatrix) -> float:
    """White-noise fraction p with concurrence(depolarize(base, p)) = target.

    Bisection against the concurrence of the noisy state, to 1e-6 in
    concurrence. The target must not exceed the base state's concurrence.
    """
    if target_concurrence < 0.0:
        raise ValueError("target concurrence must be non-negative")
    base_c = concurrence(base_state)
    if target_concurrence > base_c + 1e-12:
        raise ValueError(f"target concurrence {target_concurrence} exceeds the "
                         f"base state's {base_c:.6f}")

    def miss(p: float) -> float:
        return concurrence(optics.depolarize(base_state, p)) - target_concurrence

    lo, hi = 0.0, 1.0
    if miss(lo) <= 0.0:
        return 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        gap = miss(mid)
        if abs(gap) < 1e-6:
            return mid
        if gap > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------

def build_channel(spec: ChannelSpec) -> optics.KrausChannel:
    params = dict(spec.params)
    if spec.kind == "coupler":
        eta_h = float(params.pop("eta_h"))
        if "ratio" in params:
            eta_v = eta_h / float(params.pop("ratio"))
        else:
            eta_v = float(params.pop("eta_v"))
    elif spec.kind == "polarizer":
        angle = float(params.pop("angle"))
    elif spec.kind == "waveplate":
        retardance = float(params.pop("retardance"))
        angle = float(params.pop("angle", 0.0))
    elif spec.kind == "identity":
        pass
    else:
        raise ValueError(f"unknown channel kind {spec.kind!r}")
    if params:
        raise ValueError(f"unexpected {spec.kind} parameters: {sorted(params)}")
    if spec.kind == "coupler":
        return optics.anisotropic_coupler(eta_h, eta_v, spec.arm)
    if spec.kind == "polarizer":
        return optics.polarizer(angle, spec.arm)
    if spec.kind == "waveplate":
        return optics.KrausChannel.from_jones(optics.waveplate(retardance, angle), spec.arm)
    return optics.KrausChannel.identity(spec.arm)


def _coupler_etas(config: ScenarioConfig) -> tuple[float, float]:
    for spec in config.channel_chain:
        if spec.kind == "coupler":
            params = spec.params
            eta_h = float(params["eta_h"])
            eta_v = eta_h / float(params["ratio"]) if "ratio" in params else float(params["eta_v"])
            return eta_h, eta_v
    return 1.0, 1.0


def source_state(config: ScenarioConfig) -> PureState:
    src = config.source
    if isinstance(src, dict):
        return schmidt_pure(float(src["schmidt_theta"]))
    if src == "compensated":
        eta_h, eta_v = _coupler_etas(config)
        if eta_h == eta_v == 1.0:
            raise ValueError("'compensated' source needs a coupler in the chain")
        return schmidt_pure(optics.pump_compensation(eta_h, eta_v))
    return bell_state(src)


def target_state(config: ScenarioConfig) -> PureState:
    tgt = config.fidelity_target
    if isinstance(tgt, dict):
        return schmidt_pure(float(tgt["schmidt_theta"]))
    return bell_state(tgt)


@dataclass(frozen=True)
class ScenarioModel:
    """Resolved physical model of a scenario before any sampling."""

    state: DensityMatrix
    success_probability: float
    noise_p: float
    effective_pairs: float
    eta_h: float
    eta_v: float
    target: PureState


def resolve_model(config: ScenarioConfig) -> ScenarioModel:
    """Source through channels and noise; no randomness involved.

    The state is the post-selected (renormalized) channel output with the
    white-noise admixture applied; `effective_pairs` scales the configured
    pair rate by the channel survival probability, which is what the
    analyzers actually receive.
    """
    channels = [build_channel(spec) for spec in config.channel_chain]
    outcome = optics.apply_chain(to_density(source_state(config)), channels)
    if config.noise_fit_concurrence is not None:
        noise_p = fit_noise(config.noise_fit_concurrence, outcome.state)
    else:
        noise_p = config.noise_p or 0.0
    state = optics.depolarize(outcome.state, noise_p)
    eta_h, eta_v = _coupler_etas(config)
    return ScenarioModel(
        state=state,
        success_probability=outcome.success_probability,
        noise_p=noise_p,
        effective_pairs=config.mean_pairs * outcome.success_probability,
        eta_h=eta_h,
        eta_v=eta_v,
        target=target_state(config),
    )


def _singles_input(config: ScenarioConfig, model: ScenarioModel):
    if config.singles_extinction is None:
        return np.array([1.0, 0.0], dtype=complex)
    leak = sim.leak_fraction_for_extinction(config.singles_extinction,
                                            model.eta_h, model.eta_v)
    return sim.h_state_with_leak(leak)


def scenario_fringes(config: ScenarioConfig, model: ScenarioModel) -> dict:
    """The fringe set of one scenario: singles, transmission, two biphoton."""
    singles = sim.single_photon_fringe(_singles_input(config, model),
                                       model.eta_h, model.eta_v, _FRINGE_GRID)
    transmission = optics.transmission_fringe(model.eta_h, model.eta_v, _FRINGE_GRID)
    bi_h = sim.biphoton_fringe(model.state, "H", _FRINGE_GRID,
                               mean_pairs=model.effective_pairs,
                               seed=config.seed)
    bi_d = sim.biphoton_fringe(model.state, "D", _FRINGE_GRID,
                               mean_pairs=model.effective_pairs,
                               seed=config.seed + 1)
    return {"single_photon": singles, "transmission": transmission,
            "biphoton_h": bi_h, "biphoton_d": bi_d}


@dataclass(frozen=True)
class ScenarioReport:
    config: ScenarioConfig
    model: ScenarioModel
    tomography: tomo.TomographyResult
    chsh: bell.ChshResult
    chsh_model: bell.ChshResult
    fringes: dict
    artifacts: tuple


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fringe_to_csv(path: Path, angles, values) -> None:
    lines = ["angle_rad,value"]
    lines += [f"{repr(float(a))},{repr(float(v))}" for a, v in zip(angles, values)]
    path.write_text("\n".join(lines) + "\n")


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Execute a scenario end to end and write its artifact files.

    Tomography counts, the CHSH counts and the fringe samples all derive
    from the scenario seed, so reruns are byte-identical.
    """
    model = resolve_model(config)
    plan = sim.tomography_plan(config.tomography_plan)
    records = sim.acquire_tomography(model.state, plan,
                                     model.effective_pairs, config.seed)
    result = tomo.mle_reconstruct(records, target=model.target,
                                  plan_id=config.tomography_plan)
    if config.bootstrap_replicas >= 2:
        errors = tomo.bootstrap_errors(records, config.bootstrap_replicas,
                                       config.seed, target=model.target)
        result = replace(result, uncertainties=errors)

    chsh_records = bell.simulate_chsh_counts(model.state, bell.OPTIMAL_PLAN,
                                             model.effective_pairs, config.seed)
    chsh_result = bell.chsh_from_counts(chsh_records)
    chsh_model = bell.chsh_S(model.state)
    fringes = scenario_fringes(config, model)

    outdir = Path(config.outputs)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output directory {outdir}: {exc}") from exc

    _, evecs = eigen_hermitian(result.rho)
    top = evecs[0].amplitudes
    metrics_payload = {
        "scenario": config.name,
        "seed": config.seed,
        "noise_p": model.noise_p,
        "success_probability": model.success_probability,
        "effective_pairs": model.effective_pairs,
        "metrics": result.metrics.to_json_dict(),
        "uncertainties": result.uncertainties,
        "top_eigenvector": {"re": top.real.tolist(), "im": top.imag.tolist()},
        "chsh": {"S": chsh_result.S, "sigma_S": chsh_result.sigma_S,
                 "S_model": chsh_model.S},
        "fringe_visibilities": {
            "single_photon": fringes["single_photon"].visibility,
            "biphoton_h": fringes["biphoton_h"].visibility,
            "biphoton_d": fringes["biphoton_d"].visibility,
        },
        "likelihood": result.likelihood,
        "iterations": result.iterations,
        "converged": result.converged,
    }

    writes = {
        "density_matrix.json": lambda p: _write_json(p, result.rho.to_json_dict()),
        "tomography.json": lambda p: _write_json(p, result.to_json_dict()),
        "chsh.json": lambda p: _write_json(p, {
            **chsh_result.to_json_dict(), "S_model": chsh_model.S}),
        "counts.csv": lambda p: sim.records_to_csv(records, p),
        "fringe_single.csv": lambda p: _fringe_to_csv(
            p, fringes["single_photon"].angles, fringes["single_photon"].values),
        "fringe_transmission.csv": lambda p: _fringe_to_csv(
            p, _FRINGE_GRID, fringes["transmission"]),
        "fringe_biphoton_h.csv": lambda p: _fringe_to_csv(
            p, fringes["biphoton_h"].angles, fringes["biphoton_h"].values),
        "fringe_biphoton_d.csv": lambda p: _fringe_to_csv(
            p, fringes["biphoton_d"].angles, fringes["biphoton_d"].values),
        "metrics.json": lambda p: _write_json(p, metrics_payload),
    }
    for name, write in writes.items():
        write(outdir / name)
    manifest = {
        "scenario": config.name,
        "seed": config.seed,
        "noise_p": model.noise_p,
        "artifacts": sorted([*writes, "manifest.json"]),
    }
    _write_json(outdir / "manifest.json", manifest)

    artifact_paths = tuple(sorted((outdir / name) for name in manifest["artifacts"]))

    metrics = result.metrics
    print(f"scenario {config.name} (seed {config.seed})")
    print(f"  noise_p              {model.noise_p:.6f}")
    print(f"  success probability  {model.success_probability:.6f}")
    print(f"  concurrence          {metrics.concurrence:.4f}")
    print(f"  fidelity (target)    {metrics.fidelity_target:.4f}")
    print(f"  purity               {metrics.purity:.4f}")
    print(f"  S (counts)           {chsh_result.S:.4f} +/- {chsh_result.sigma_S:.4f}")
    print(f"  S (model)            {chsh_model.S:.4f}")
    if not result.converged:
        print("  WARNING: reconstruction hit the iteration cap", file=sys.stderr)
    return ScenarioReport(config, model, result, chsh_result, chsh_model,
                          fringes, artifact_paths)


# ---------------------------------------------------------------------------
# Built-in scenarios and config files
# ---------------------------------------------------------------------------

def builtin_scenario(name: str, outputs: str | None = None,
                     seed: int | None = None, **overrides) -> ScenarioConfig:
    """One of the four named experiments shipped with the package."""
    nanowire_chain = (ChannelSpec("coupler",
                                  {"eta_h": NANOWIRE_ETA_H, "ratio": NANOWIRE_RATIO},
                                  arm=1),)
    presets = {
        "source": dict(source="phi+", channel_chain=(),
                       noise_fit_concurrence=0.924, seed=7),
        "taper": dict(source="phi+", channel_chain=(),
                      noise_fit_concurrence=0.852, seed=7),
        "nanowire": dict(source="phi+", channel_chain=nanowire_chain,
                         noise_fit_concurrence=0.700,
                         fidelity_target={"schmidt_theta": NANOWIRE_SCHMIDT_THETA},
                         singles_extinction=25.0, seed=7),
        "nanowire-compensated": dict(source="compensated",
                                     channel_chain=nanowire_chain,
                                     noise_fit_concurrence=0.824,
                                     singles_extinction=25.0, seed=7),
    }
    if name not in presets:
        raise ValueError(f"unknown scenario {name!r}; "
                         f"builtins: {sorted(presets)}")
    kwargs = dict(presets[name])
    kwargs.update(overrides)
    if seed is not None:
        kwargs["seed"] = seed
    return ScenarioConfig(name=name,
                          outputs=outputs or f"out/{name}",
                          **kwargs)


BUILTIN_SCENARIOS = ("source", "taper", "nanowire", "nanowire-compensated")


def load_scenario(path) -> ScenarioConfig:
    """Parse a YAML scenario file into a ScenarioConfig."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: scenario file must hold a mapping")
    if "seed" not in raw:
        raise ValueError(f"{path}: scenario must specify a seed")
    chain = []
    for entry in raw.pop("channel_chain", []) or []:
        entry = dict(entry)
        kind = entry.pop("kind")
        arm = int(entry.pop("arm", 1))
        chain.append(ChannelSpec(kind, entry, arm))
    known = {f.name for f in ScenarioConfig.__dataclass_fields__.values()}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown scenario keys {sorted(unknown)}")
    return ScenarioConfig(channel_chain=tuple(chain), **raw)


def _resolve_config(arg: str, seed: int | None, outputs: str | None) -> ScenarioConfig:
    if arg in BUILTIN_SCENARIOS:
        return builtin_scenario(arg, outputs=outputs, seed=seed)
    config = load_scenario(arg)
    if seed is not None:
        config = replace(config, seed=seed)
    if outputs is not None:
        config = replace(config, outputs=outputs)
    return config


# ---------------------------------------------------------------------------
# Command line interface
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    config = _resolve_config(args.scenario, args.seed, args.outputs)
    run_scenario(config)
    print(f"  artifacts in         {config.outputs}")
    return 0


def _cmd_budget(args) -> int:
    stages = []
    for token in args.stages:
        if "=" in token:
            name, value = token.split("=", 1)
            stages.append((name, float(value)))
        else:
            stages.append(float(token))
    budget = efficiency_budget(stages, solve_total=args.solve_total,
                               quoted_unknown=args.quoted_unknown)
    print(json.dumps(budget.to_json_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_fringe(args) -> int:
    config = _resolve_config(args.scenario, args.seed, args.outputs)
    model = resolve_model(config)
    fringes = scenario_fringes(config, model)
    outdir = Path(config.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    _fringe_to_csv(outdir / "fringe_single.csv",
                   fringes["single_photon"].angles, fringes["single_photon"].values)
    _fringe_to_csv(outdir / "fringe_transmission.csv",
                   _FRINGE_GRID, fringes["transmission"])
    _fringe_to_csv(outdir / "fringe_biphoton_h.csv",
                   fringes["biphoton_h"].angles, fringes["biphoton_h"].values)
    _fringe_to_csv(outdir / "fringe_biphoton_d.csv",
                   fringes["biphoton_d"].angles, fringes["biphoton_d"].values)
    print(f"single-photon visibility {fringes['single_photon'].visibility:.4f}")
    print(f"biphoton H visibility    {fringes['biphoton_h'].visibility:.4f}")
    print(f"biphoton D visibility    {fringes['biphoton_d'].visibility:.4f}")
    print(f"fringe CSVs in {config.outputs}")
    return 0


def _cmd_chsh(args) -> int:
    config = _resolve_config(args.scenario, args.seed, args.outputs)
    model = resolve_model(config)
    chsh_records = bell.simulate_chsh_counts(model.state, bell.OPTIMAL_PLAN,
                                             model.effective_pairs, config.seed)
    result = bell.chsh_from_counts(chsh_records)
    exact = bell.chsh_S(model.state)
    outdir = Path(config.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "chsh.json",
                {**result.to_json_dict(), "S_model": exact.S})
    print(f"S = {result.S:.4f} +/- {result.sigma_S:.4f} (model {exact.S:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biphoton",
        description="Simulate entangled-photon transport through "
                    "polarization-anisotropic lossy channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario end to end")
    run_p.add_argument("scenario",
                       help="YAML config path or builtin name "
                            f"({', '.join(BUILTIN_SCENARIOS)})")
    run_p.add_argument("--seed", type=int, default=None, help="override the seed")
    run_p.add_argument("--outputs", default=None, help="override the output dir")
    run_p.set_defaults(func=_cmd_run)

    budget_p = sub.add_parser("budget", help="stage-efficiency budget")
    budget_p.add_argument("stages", nargs="+",
                          help="efficiencies, optionally name=value")
    budget_p.add_argument("--solve-total", type=float, default=None,
                          help="solve for one unknown stage given this total")
    budget_p.add_argument("--quoted-unknown", type=float, default=None,
                          help="externally quoted value of the unknown stage, "
                               "reported next to the recomputed one")
    budget_p.set_defaults(func=_cmd_budget)

    fringe_p = sub.add_parser("fringe", help="emit only the fringe CSVs")
    fringe_p.add_argument("scenario")
    fringe_p.add_argument("--seed", type=int, default=None)
    fringe_p.add_argument("--outputs", default=None)
    fringe_p.set_defaults(func=_cmd_fringe)

    chsh_p = sub.add_parser("chsh", help="emit only the CHSH result")
    chsh_p.add_argument("scenario")
    chsh_p.add_argument("--seed", type=int, default=None)
    chsh_p.add_argument("--outputs", default=None)
    chsh_p.set_defaults(func=_cmd_chsh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
