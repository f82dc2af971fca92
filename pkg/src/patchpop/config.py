"""JSON configuration: schema, strict parsing, and run settings.

A run configuration is a single versioned JSON document holding the model
(rate functions as tagged objects mirroring the rate-function variants),
optional envelope models, and run parameters (grid step, tolerances, horizon,
phase nodes, dispersal-strength ladders, output directory). Unknown keys are
rejected with a dotted-path location so typos cannot silently change a run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, StructuralModelError
from .model import (
    DispersalMatrix,
    LogisticMortality,
    ModelSpec,
    MortalityLaw,
    PowerLawMortality,
)
from .periodic import EnvelopePair
from .rates import (
    Constant,
    PeriodicModulation,
    PiecewiseLinear,
    RateFunction,
    SeparableProduct,
    Window,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    age_step: Optional[float] = None
    tol: float = 1e-8
    t_end: Optional[float] = None
    phase_nodes: int = 64
    eps_ladder: tuple[float, ...] = (0.02, 0.01, 0.005)
    out_dir: str = "."
    envelope: Optional[EnvelopePair] = None

    def resolved_t_end(self) -> float:
        return self.t_end if self.t_end is not None else 40.0 * self.model.fertility_hi


def _expect_mapping(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", where)
    return obj


def _check_keys(obj: dict, allowed: set[str], where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}", where)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing required key '{key}'", where)
    return obj[key]


def _number(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError("expected a number", where)
    return float(obj)


def rate_from_json(obj, where: str) -> RateFunction:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Constant(float(obj))
    obj = _expect_mapping(obj, where)
    kind = _require(obj, "type", where)
    try:
        if kind == "constant":
            _check_keys(obj, {"type", "value"}, where)
            return Constant(_number(_require(obj, "value", where), f"{where}.value"))
        if kind == "window":
            _check_keys(obj, {"type", "lo", "hi", "value"}, where)
            return Window(
                _number(_require(obj, "lo", where), f"{where}.lo"),
                _number(_require(obj, "hi", where), f"{where}.hi"),
                _number(_require(obj, "value", where), f"{where}.value"),
            )
        if kind == "piecewise_linear":
            _check_keys(obj, {"type", "knots"}, where)
            knots = _require(obj, "knots", where)
            if not isinstance(knots, list):
                raise ConfigError("knots must be a list of [age, value] pairs", f"{where}.knots")
            pairs = []
            for i, kn in enumerate(knots):
                if not (isinstance(kn, list) and len(kn) == 2):
                    raise ConfigError("each knot must be [age, value]", f"{where}.knots[{i}]")
                pairs.append((_number(kn[0], f"{where}.knots[{i}][0]"),
                              _number(kn[1], f"{where}.knots[{i}][1]")))
            return PiecewiseLinear(tuple(pairs))
        if kind == "separable":
            _check_keys(obj, {"type", "age", "modulation"}, where)
            age = rate_from_json(_require(obj, "age", where), f"{where}.age")
            mod = _require(obj, "modulation", where)
            mod = _expect_mapping(mod, f"{where}.modulation")
            _check_keys(mod, {"period", "samples"}, f"{where}.modulation")
            samples = _require(mod, "samples", f"{where}.modulation")
            if not isinstance(samples, list):
                raise ConfigError("samples must be a list of [phase, factor] pairs",
                                  f"{where}.modulation.samples")
            pairs = tuple(
                (_number(s[0], f"{where}.modulation.samples[{i}][0]"),
                 _number(s[1], f"{where}.modulation.samples[{i}][1]"))
                for i, s in enumerate(samples)
            )
            return SeparableProduct(
                age,
                PeriodicModulation(
                    _number(_require(mod, "period", f"{where}.modulation"),
                            f"{where}.modulation.period"),
                    pairs,
                ),
            )
    except StructuralModelError as err:
        raise ConfigError(str(err), where) from err
    raise ConfigError(f"unknown rate type '{kind}'", f"{where}.type")


def mortality_from_json(obj, where: str) -> MortalityLaw:
    obj = _expect_mapping(obj, where)
    kind = _require(obj, "type", where)
    if kind == "logistic":
        _check_keys(obj, {"type", "mu", "carrying"}, where)
        return LogisticMortality(
            rate_from_json(_require(obj, "mu", where), f"{where}.mu"),
            rate_from_json(_require(obj, "carrying", where), f"{where}.carrying"),
        )
    if kind == "power_law":
        _check_keys(obj, {"type", "mu", "coefficient", "gamma"}, where)
        return PowerLawMortality(
            rate_from_json(_require(obj, "mu", where), f"{where}.mu"),
            rate_from_json(_require(obj, "coefficient", where), f"{where}.coefficient"),
            _number(_require(obj, "gamma", where), f"{where}.gamma"),
        )
    raise ConfigError(f"unknown mortality type '{kind}'", f"{where}.type")


def model_from_json(obj, where: str = "model") -> ModelSpec:
    obj = _expect_mapping(obj, where)
    _check_keys(
        obj,
        {"patches", "lifespan", "fertility_window", "birth", "mortality",
         "dispersal", "initial"},
        where,
    )
    n = _require(obj, "patches", where)
    if not isinstance(n, int) or n < 1:
        raise ConfigError("patches must be a positive integer", f"{where}.patches")
    window = _require(obj, "fertility_window", where)
    if not (isinstance(window, list) and len(window) == 2):
        raise ConfigError("fertility_window must be [a_m, A_m]", f"{where}.fertility_window")

    def _rate_list(key: str):
        lst = _require(obj, key, where)
        if not isinstance(lst, list) or len(lst) != n:
            raise ConfigError(f"{key} must list one entry per patch", f"{where}.{key}")
        return tuple(
            rate_from_json(item, f"{where}.{key}[{i}]") for i, item in enumerate(lst)
        )

    mort_list = _require(obj, "mortality", where)
    if not isinstance(mort_list, list) or len(mort_list) != n:
        raise ConfigError("mortality must list one entry per patch", f"{where}.mortality")
    disp = _expect_mapping(_require(obj, "dispersal", where), f"{where}.dispersal")
    _check_keys(disp, {"entries", "column_sum_nonpositive"}, f"{where}.dispersal")
    entries = _require(disp, "entries", f"{where}.dispersal")
    if not (isinstance(entries, list) and len(entries) == n
            and all(isinstance(r, list) and len(r) == n for r in entries)):
        raise ConfigError("entries must be an NxN matrix", f"{where}.dispersal.entries")
    flag = disp.get("column_sum_nonpositive", False)
    if not isinstance(flag, bool):
        raise ConfigError("column_sum_nonpositive must be a boolean",
                          f"{where}.dispersal.column_sum_nonpositive")
    try:
        return ModelSpec(
            n_patches=n,
            lifespan=_number(_require(obj, "lifespan", where), f"{where}.lifespan"),
            birth=_rate_list("birth"),
            mortality=tuple(
                mortality_from_json(item, f"{where}.mortality[{i}]")
                for i, item in enumerate(mort_list)
            ),
            dispersal=DispersalMatrix(
                tuple(
                    tuple(
                        rate_from_json(entries[k][j], f"{where}.dispersal.entries[{k}][{j}]")
                        for j in range(n)
                    )
                    for k in range(n)
                ),
                column_sum_nonpositive=flag,
            ),
            initial=_rate_list("initial"),
            fertility_lo=_number(window[0], f"{where}.fertility_window[0]"),
            fertility_hi=_number(window[1], f"{where}.fertility_window[1]"),
        )
    except StructuralModelError as err:
        raise ConfigError(str(err), where) from err


def parse_config(doc, where: str = "") -> RunConfig:
    root = where or "config"
    doc = _expect_mapping(doc, root)
    _check_keys(doc, {"version", "model", "run", "envelope"}, root)
    version = _require(doc, "version", root)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", f"{root}.version")
    model = model_from_json(_require(doc, "model", root), f"{root}.model")
    run = doc.get("run", {})
    run = _expect_mapping(run, f"{root}.run")
    _check_keys(
        run,
        {"age_step", "tol", "t_end", "phase_nodes", "eps_ladder", "out_dir"},
        f"{root}.run",
    )
    envelope = None
    if "envelope" in doc:
        env = _expect_mapping(doc["envelope"], f"{root}.envelope")
        _check_keys(env, {"lower", "upper", "onset"}, f"{root}.envelope")
        envelope = EnvelopePair(
            lower_model=model_from_json(_require(env, "lower", f"{root}.envelope"),
                                        f"{root}.envelope.lower"),
            upper_model=model_from_json(_require(env, "upper", f"{root}.envelope"),
                                        f"{root}.envelope.upper"),
            onset=_number(env.get("onset", 0.0), f"{root}.envelope.onset"),
        )
    phase_nodes = run.get("phase_nodes", 64)
    if not isinstance(phase_nodes, int) or phase_nodes < 1:
        raise ConfigError("phase_nodes must be a positive integer", f"{root}.run.phase_nodes")
    ladder = run.get("eps_ladder", [0.02, 0.01, 0.005])
    if not isinstance(ladder, list) or not ladder:
        raise ConfigError("eps_ladder must be a nonempty list", f"{root}.run.eps_ladder")
    return RunConfig(
        model=model,
        age_step=(None if run.get("age_step") is None
                  else _number(run["age_step"], f"{root}.run.age_step")),
        tol=_number(run.get("tol", 1e-8), f"{root}.run.tol"),
        t_end=(None if run.get("t_end") is None
               else _number(run["t_end"], f"{root}.run.t_end")),
        phase_nodes=phase_nodes,
        eps_ladder=tuple(_number(e, f"{root}.run.eps_ladder[{i}]")
                         for i, e in enumerate(ladder)),
        out_dir=str(run.get("out_dir", ".")),
        envelope=envelope,
    )


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(str(err), str(p)) from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(err.msg, f"line {err.lineno} column {err.colno}") from err
    return parse_config(doc)
