"""Strict experiment configuration.

Configs are YAML mappings validated against a closed schema: unknown
keys are rejected, every error names the offending path, and all
defaults are resolved to concrete values at parse time so the canonical
form is self-contained.  Parsing then re-serializing then parsing gives
back an identical config, and the canonical JSON encoding is hashed
into the run manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import yaml

from ..errors import ConfigurationError
from ..objectives import (ClientObjective, QuadraticObjective,
                          ScalarPolyObjective, ToyNonConvexObjective,
                          conservative_constants, resolve_domain_radii)
from ..payments import PaymentSchedule, build_schedule
from ..protocol import LearningRateSchedule, ProtocolConfig, RewardSpec
from ..strategies import StrategyPlan
from ..meanest import MeanGameSpec

__all__ = ["ExperimentConfig", "parse_config", "parse_config_text"]

SCHEMA_VERSION = 1

KINDS = ("run", "sweep", "bounds", "meanest")

_SECTIONS = {
    "run": {"required": ("protocol", "clients"),
            "optional": ("strategies", "payment", "reward")},
    "sweep": {"required": ("protocol", "clients", "sweep"),
              "optional": ("strategies", "reward")},
    "bounds": {"required": ("protocol", "clients", "bounds"),
               "optional": ("strategies", "payment")},
    "meanest": {"required": ("meanest",), "optional": ()},
}


def _fail(path: str, message: str) -> None:
    raise ConfigurationError(f"{path}: {message}")


def _as_map(node: Any, path: str, required: Sequence[str],
            optional: Sequence[str] = ()) -> dict:
    if not isinstance(node, dict):
        _fail(path, f"expected a mapping, got {type(node).__name__}")
    for key in node:
        if key not in required and key not in optional:
            _fail(path, f"unknown key {key!r}")
    for key in required:
        if key not in node:
            _fail(path, f"missing required key {key!r}")
    return node


def _number(node: Any, path: str, *, minimum: float | None = None,
            exclusive: bool = False) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        _fail(path, f"expected a number, got {node!r}")
    value = float(node)
    if not np.isfinite(value):
        _fail(path, "must be finite")
    if minimum is not None:
        if exclusive and value <= minimum:
            _fail(path, f"must be > {minimum}, got {value}")
        if not exclusive and value < minimum:
            _fail(path, f"must be >= {minimum}, got {value}")
    return value


def _integer(node: Any, path: str, *, minimum: int | None = None,
             maximum: int | None = None) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        _fail(path, f"expected an integer, got {node!r}")
    if minimum is not None and node < minimum:
        _fail(path, f"must be >= {minimum}, got {node}")
    if maximum is not None and node > maximum:
        _fail(path, f"must be <= {maximum}, got {node}")
    return int(node)


def _boolean(node: Any, path: str) -> bool:
    if not isinstance(node, bool):
        _fail(path, f"expected a boolean, got {node!r}")
    return node


def _choice(node: Any, path: str, choices: Sequence[str]) -> str:
    if node not in choices:
        _fail(path, f"expected one of {list(choices)}, got {node!r}")
    return node


def _number_list(node: Any, path: str, *, min_len: int = 1,
                 minimum: float | None = None, exclusive: bool = False) -> list[float]:
    if not isinstance(node, list):
        _fail(path, f"expected a list, got {type(node).__name__}")
    if len(node) < min_len:
        _fail(path, f"needs at least {min_len} entries, got {len(node)}")
    return [_number(v, f"{path}[{k}]", minimum=minimum, exclusive=exclusive)
            for k, v in enumerate(node)]


def _scale_entry(node: Any, path: str):
    """A strategy scale: scalar or per-step list, every value |a| >= 1."""
    values = node if isinstance(node, list) else [node]
    out = []
    for k, v in enumerate(values):
        p = f"{path}[{k}]" if isinstance(node, list) else path
        x = _number(v, p)
        if abs(x) < 1.0:
            _fail(p, f"|scale| must be >= 1, got {x}")
        out.append(x)
    return out if isinstance(node, list) else out[0]


def _noise_entry(node: Any, path: str):
    values = node if isinstance(node, list) else [node]
    out = [_number(v, f"{path}[{k}]" if isinstance(node, list) else path,
                   minimum=0.0) for k, v in enumerate(values)]
    return out if isinstance(node, list) else out[0]


# ------------------------------------------------------------ sections

def _validate_objective(node: Any, path: str, dimension: int) -> dict:
    kind = _choice(_as_map(node, path, ("kind",), ("center", "curvature",
                                                   "offset", "coeffs", "hidden",
                                                   "n_train", "n_test",
                                                   "target_shift", "sample_seed"))
                   .get("kind"), f"{path}.kind",
                   ("quadratic", "scalar_poly", "toy_network"))
    if kind == "quadratic":
        node = _as_map(node, path, ("kind", "center", "curvature"), ("offset",))
        center = _number_list(node["center"], f"{path}.center", min_len=1)
        if len(center) != dimension:
            _fail(f"{path}.center", f"has {len(center)} entries, model dimension "
                                    f"is {dimension}")
        rows = node["curvature"]
        if not isinstance(rows, list) or len(rows) != dimension:
            _fail(f"{path}.curvature", f"must be a {dimension}x{dimension} matrix")
        curv = [_number_list(row, f"{path}.curvature[{r}]", min_len=dimension)
                for r, row in enumerate(rows)]
        if any(len(row) != dimension for row in curv):
            _fail(f"{path}.curvature", f"must be a {dimension}x{dimension} matrix")
        return {"kind": "quadratic", "center": center, "curvature": curv,
                "offset": _number(node.get("offset", 0.0), f"{path}.offset")}
    if kind == "scalar_poly":
        node = _as_map(node, path, ("kind", "coeffs"), ("center",))
        if dimension != 1:
            _fail(path, "scalar_poly objectives need model dimension 1")
        coeffs = _number_list(node["coeffs"], f"{path}.coeffs", min_len=1)
        out = {"kind": "scalar_poly", "coeffs": coeffs}
        if "center" in node:
            out["center"] = _number(node["center"], f"{path}.center")
        else:
            out["center"] = float(ScalarPolyObjective(coeffs).center[0])
        return out
    node = _as_map(node, path, ("kind", "hidden", "n_train", "n_test"),
                   ("target_shift", "sample_seed"))
    hidden = _integer(node["hidden"], f"{path}.hidden", minimum=1)
    if 3 * hidden != dimension:
        _fail(path, f"toy_network with hidden={hidden} has {3 * hidden} "
                    f"parameters, model dimension is {dimension}")
    return {"kind": "toy_network", "hidden": hidden,
            "n_train": _integer(node["n_train"], f"{path}.n_train", minimum=1),
            "n_test": _integer(node["n_test"], f"{path}.n_test", minimum=1),
            "target_shift": _number(node.get("target_shift", 0.0),
                                    f"{path}.target_shift"),
            "sample_seed": _integer(node.get("sample_seed", 0),
                                    f"{path}.sample_seed", minimum=0)}


def _build_objective(data: dict):
    if data["kind"] == "quadratic":
        return QuadraticObjective(data["center"], data["curvature"], data["offset"])
    if data["kind"] == "scalar_poly":
        return ScalarPolyObjective(data["coeffs"], data["center"])
    return ToyNonConvexObjective.synthetic(
        data["hidden"], data["n_train"], data["n_test"],
        data["target_shift"], data["sample_seed"])


def _validate_clients(node: Any, path: str, n_clients: int,
                      dimension: int) -> list[dict]:
    if not isinstance(node, list):
        _fail(path, "expected a list of client mappings")
    if len(node) != n_clients:
        _fail(path, f"protocol declares {n_clients} clients, found {len(node)}")
    out = []
    for k, entry in enumerate(node):
        p = f"{path}[{k}]"
        entry = _as_map(entry, p, ("objective",), ("sigma", "domain_radius"))
        item = {"objective": _validate_objective(entry["objective"],
                                                 f"{p}.objective", dimension),
                "sigma": _number(entry.get("sigma", 0.0), f"{p}.sigma", minimum=0.0)}
        if "domain_radius" in entry and entry["domain_radius"] is not None:
            item["domain_radius"] = _number(entry["domain_radius"],
                                            f"{p}.domain_radius", minimum=0.0,
                                            exclusive=True)
        else:
            item["domain_radius"] = None  # resolved below against the ensemble
        out.append(item)
    return out


def _validate_strategy(node: Any, path: str) -> dict:
    kind = _choice(_as_map(node, path, ("kind",),
                           ("scale", "noise", "angle", "scale_range",
                            "noise_range", "rule", "gain", "max_scale"))
                   .get("kind"), f"{path}.kind",
                   ("truthful", "pure", "mixed", "directional", "history"))
    if kind == "truthful":
        _as_map(node, path, ("kind",))
        return {"kind": "truthful"}
    if kind == "pure":
        node = _as_map(node, path, ("kind", "scale"), ("noise",))
        return {"kind": "pure", "scale": _scale_entry(node["scale"], f"{path}.scale"),
                "noise": _noise_entry(node.get("noise", 0.0), f"{path}.noise")}
    if kind == "mixed":
        node = _as_map(node, path, ("kind", "scale_range"), ("noise_range",))
        lo, hi = _number_list(node["scale_range"], f"{path}.scale_range", min_len=2)
        if not 1.0 <= lo <= hi:
            _fail(f"{path}.scale_range", f"needs 1 <= lo <= hi, got [{lo}, {hi}]")
        nlo, nhi = _number_list(node.get("noise_range", [0.0, 0.0]),
                                f"{path}.noise_range", min_len=2, minimum=0.0)
        if nlo > nhi:
            _fail(f"{path}.noise_range", f"needs lo <= hi, got [{nlo}, {nhi}]")
        return {"kind": "mixed", "scale_range": [lo, hi], "noise_range": [nlo, nhi]}
    if kind == "directional":
        node = _as_map(node, path, ("kind", "scale", "angle"), ("noise",))
        scale = _scale_entry(node["scale"], f"{path}.scale")
        for v in (scale if isinstance(scale, list) else [scale]):
            if v < 1.0:
                _fail(f"{path}.scale", "directional scales must be >= 1")
        angle = node["angle"]
        angle = ([_number(a, f"{path}.angle[{k}]") for k, a in enumerate(angle)]
                 if isinstance(angle, list) else _number(angle, f"{path}.angle"))
        return {"kind": "directional", "scale": scale, "angle": angle,
                "noise": _noise_entry(node.get("noise", 0.0), f"{path}.noise")}
    node = _as_map(node, path, ("kind", "rule"), ("gain", "max_scale"))
    _choice(node["rule"], f"{path}.rule", ("theta_drift",))
    return {"kind": "history", "rule": "theta_drift",
            "gain": _number(node.get("gain", 1.0), f"{path}.gain", minimum=0.0),
            "max_scale": _number(node.get("max_scale", 3.0), f"{path}.max_scale",
                                 minimum=1.0)}


def _theta_drift_callback(gain: float, max_scale: float):
    def rule(history) -> tuple[float, float]:
        if len(history.thetas) < 2:
            return 1.0, 0.0
        drift = float(np.linalg.norm(history.thetas[-1] - history.thetas[-2]))
        return min(max_scale, 1.0 + gain * drift), 0.0
    return rule


def _build_plan(data: dict) -> StrategyPlan:
    if data["kind"] == "truthful":
        return StrategyPlan.truthful()
    if data["kind"] == "pure":
        return StrategyPlan.pure(data["scale"], data["noise"])
    if data["kind"] == "mixed":
        return StrategyPlan.mixed(tuple(data["scale_range"]),
                                  tuple(data["noise_range"]))
    if data["kind"] == "directional":
        return StrategyPlan.directional(data["scale"], data["angle"], data["noise"])
    return StrategyPlan.history(_theta_drift_callback(data["gain"],
                                                      data["max_scale"]))


def _validate_protocol(node: Any, path: str) -> dict:
    node = _as_map(node, path, ("n_clients", "horizon", "dimension",
                                "learning_rate"),
                   ("theta_init", "aggregation", "local_steps"))
    n_clients = _integer(node["n_clients"], f"{path}.n_clients", minimum=1)
    dimension = _integer(node["dimension"], f"{path}.dimension", minimum=1)
    theta_init = _number_list(node.get("theta_init", [0.0] * dimension),
                              f"{path}.theta_init", min_len=1)
    if len(theta_init) != dimension:
        _fail(f"{path}.theta_init", f"has {len(theta_init)} entries, dimension "
                                    f"is {dimension}")
    lr = node["learning_rate"]
    lr_kind = _choice(_as_map(lr, f"{path}.learning_rate", ("kind",),
                              ("gamma", "m", "H", "M_V", "allow_approximate"))
                      .get("kind"), f"{path}.learning_rate.kind",
                      ("constant", "inverse_time"))
    if lr_kind == "constant":
        lr = _as_map(lr, f"{path}.learning_rate", ("kind", "gamma"))
        lr_out = {"kind": "constant",
                  "gamma": _number(lr["gamma"], f"{path}.learning_rate.gamma",
                                   minimum=0.0, exclusive=True)}
    else:
        lr = _as_map(lr, f"{path}.learning_rate", ("kind",),
                     ("m", "H", "M_V", "allow_approximate"))
        lr_out = {"kind": "inverse_time",
                  "M_V": _number(lr.get("M_V", 0.0), f"{path}.learning_rate.M_V",
                                 minimum=0.0),
                  "allow_approximate": _boolean(lr.get("allow_approximate", False),
                                                f"{path}.learning_rate.allow_approximate")}
        for key in ("m", "H"):
            if key in lr:
                lr_out[key] = _number(lr[key], f"{path}.learning_rate.{key}",
                                      minimum=0.0, exclusive=True)
    return {"n_clients": n_clients,
            "horizon": _integer(node["horizon"], f"{path}.horizon", minimum=1),
            "dimension": dimension,
            "theta_init": theta_init,
            "aggregation": _choice(node.get("aggregation", "mean"),
                                   f"{path}.aggregation",
                                   ("mean", "coordinate_median")),
            "local_steps": _integer(node.get("local_steps", 1),
                                    f"{path}.local_steps", minimum=1),
            "learning_rate": lr_out}


def _validate_payment(node: Any, path: str) -> dict:
    kind = _choice(_as_map(node, path, ("kind",),
                           ("c", "epsilon", "m", "H", "L", "allow_approximate"))
                   .get("kind"), f"{path}.kind", ("none", "constant", "calibrated"))
    if kind == "none":
        _as_map(node, path, ("kind",))
        return {"kind": "none"}
    if kind == "constant":
        node = _as_map(node, path, ("kind", "c"))
        return {"kind": "constant", "c": _number(node["c"], f"{path}.c", minimum=0.0)}
    node = _as_map(node, path, ("kind", "epsilon"),
                   ("m", "H", "L", "allow_approximate"))
    out = {"kind": "calibrated",
           "epsilon": _number(node["epsilon"], f"{path}.epsilon", minimum=0.0,
                              exclusive=True),
           "allow_approximate": _boolean(node.get("allow_approximate", False),
                                         f"{path}.allow_approximate")}
    for key in ("m", "H", "L"):
        if key in node:
            out[key] = _number(node[key], f"{path}.{key}", minimum=0.0,
                               exclusive=True)
    return out


def _validate_reward(node: Any, path: str) -> dict:
    kind = _choice(_as_map(node, path, ("kind",), ("group", "alpha", "beta"))
                   .get("kind"), f"{path}.kind",
                   ("neg_loss", "logistic", "group_average", "competitive"))
    if kind == "group_average":
        node = _as_map(node, path, ("kind", "group"))
        group = node["group"]
        if not isinstance(group, list) or not group:
            _fail(f"{path}.group", "expected a non-empty list of client indices")
        return {"kind": kind,
                "group": [_integer(j, f"{path}.group[{k}]", minimum=0)
                          for k, j in enumerate(group)]}
    if kind == "competitive":
        node = _as_map(node, path, ("kind",), ("alpha", "beta"))
        return {"kind": kind,
                "alpha": _number(node.get("alpha", 1.0), f"{path}.alpha"),
                "beta": _number(node.get("beta", 1.0), f"{path}.beta")}
    _as_map(node, path, ("kind",))
    return {"kind": kind}


def _validate_sweep(node: Any, path: str, n_clients: int) -> dict:
    node = _as_map(node, path, ("a_values", "c_values", "deviant", "replications"),
                   ("b_values",))
    a_values = _number_list(node["a_values"], f"{path}.a_values")
    for k, a in enumerate(a_values):
        if abs(a) < 1.0:
            _fail(f"{path}.a_values[{k}]", f"|scale| must be >= 1, got {a}")
    return {"a_values": a_values,
            "b_values": _number_list(node.get("b_values", [0.0]),
                                     f"{path}.b_values", minimum=0.0),
            "c_values": _number_list(node["c_values"], f"{path}.c_values",
                                     minimum=0.0),
            "deviant": _integer(node["deviant"], f"{path}.deviant", minimum=0,
                                maximum=n_clients - 1),
            "replications": _integer(node["replications"], f"{path}.replications",
                                     minimum=1)}


def _validate_bounds(node: Any, path: str, horizon: int) -> dict:
    node = _as_map(node, path, ("probe_steps", "replications", "epsilon"),
                   ("seeds",))
    steps = node["probe_steps"]
    if not isinstance(steps, list) or not steps:
        _fail(f"{path}.probe_steps", "expected a non-empty list of steps")
    return {"probe_steps": [_integer(s, f"{path}.probe_steps[{k}]", minimum=1,
                                     maximum=horizon)
                            for k, s in enumerate(steps)],
            "replications": _integer(node["replications"], f"{path}.replications",
                                     minimum=1),
            "epsilon": _number(node["epsilon"], f"{path}.epsilon", minimum=0.0),
            "seeds": _integer(node.get("seeds", 20), f"{path}.seeds", minimum=2)}


def _validate_meanest(node: Any, path: str) -> dict:
    variant = _choice(_as_map(node, path, ("variant",),
                              ("mus", "sigma", "sigmas", "n_samples", "tau",
                               "tau0", "client", "draws", "c_grid"))
                      .get("variant"), f"{path}.variant", ("fixed", "bayesian"))
    if variant == "fixed":
        node = _as_map(node, path, ("variant", "mus", "sigma"),
                       ("client", "draws", "c_grid"))
        mus = _number_list(node["mus"], f"{path}.mus", min_len=2)
        grid = node.get("c_grid", {"start": 1.0, "stop": 3.0, "step": 0.01})
        grid = _as_map(grid, f"{path}.c_grid", ("start", "stop", "step"))
        start = _number(grid["start"], f"{path}.c_grid.start", minimum=1.0)
        stop = _number(grid["stop"], f"{path}.c_grid.stop", minimum=start)
        step = _number(grid["step"], f"{path}.c_grid.step", minimum=0.0,
                       exclusive=True)
        return {"variant": "fixed", "mus": mus,
                "sigma": _number(node["sigma"], f"{path}.sigma", minimum=0.0,
                                 exclusive=True),
                "client": _integer(node.get("client", 0), f"{path}.client",
                                   minimum=0, maximum=len(mus) - 1),
                "draws": _integer(node.get("draws", 100000), f"{path}.draws",
                                  minimum=1),
                "c_grid": {"start": start, "stop": stop, "step": step}}
    node = _as_map(node, path, ("variant", "sigmas", "n_samples", "tau", "tau0"),
                   ("client", "draws"))
    sigmas = _number_list(node["sigmas"], f"{path}.sigmas", min_len=2,
                          minimum=0.0, exclusive=True)
    return {"variant": "bayesian", "sigmas": sigmas,
            "n_samples": _integer(node["n_samples"], f"{path}.n_samples", minimum=1),
            "tau": _number(node["tau"], f"{path}.tau", minimum=0.0, exclusive=True),
            "tau0": _number(node["tau0"], f"{path}.tau0", minimum=0.0,
                            exclusive=True),
            "client": _integer(node.get("client", 0), f"{path}.client", minimum=0,
                               maximum=len(sigmas) - 1),
            "draws": _integer(node.get("draws", 100000), f"{path}.draws", minimum=1)}


# ------------------------------------------------------------ top level

@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment in canonical (fully resolved) form.

    ``data`` is plain Python structure; two configs are equal exactly
    when their canonical forms are.  The ``build_*`` methods construct
    the library objects an experiment needs.
    """

    data: dict

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # builders -----------------------------------------------------
    def build_clients(self) -> list[ClientObjective]:
        return [ClientObjective(objective=_build_objective(c["objective"]),
                                noise_sigma=c["sigma"],
                                domain_radius=c["domain_radius"])
                for c in self.data["clients"]]

    def build_plans(self) -> list[StrategyPlan]:
        return [_build_plan(s) for s in self.data["strategies"]]

    def build_rate(self) -> LearningRateSchedule:
        lr = self.data["protocol"]["learning_rate"]
        if lr["kind"] == "constant":
            return LearningRateSchedule.constant(lr["gamma"])
        return LearningRateSchedule.inverse_time(
            lr["m"], lr["H"], self.data["protocol"]["n_clients"], lr["M_V"])

    def build_protocol(self, seed: int | None = None) -> ProtocolConfig:
        p = self.data["protocol"]
        return ProtocolConfig(
            n_clients=p["n_clients"], horizon=p["horizon"], rate=self.build_rate(),
            theta_init=tuple(p["theta_init"]), aggregation=p["aggregation"],
            local_steps=p["local_steps"],
            seed=self.seed if seed is None else seed)

    def build_payment_schedule(self) -> PaymentSchedule | None:
        pay = self.data.get("payment")
        if pay is None or pay["kind"] == "none":
            return None
        horizon = self.data["protocol"]["horizon"]
        if pay["kind"] == "constant":
            return build_schedule("constant", self.build_rate(), horizon,
                                  c=pay["c"])
        return build_schedule(
            "calibrated", self.build_rate(), horizon, m=pay["m"], H=pay["H"],
            L=pay["L"], n_clients=self.data["protocol"]["n_clients"],
            epsilon=pay["epsilon"])

    def build_reward(self) -> RewardSpec:
        r = self.data.get("reward", {"kind": "neg_loss"})
        if r["kind"] == "group_average":
            return RewardSpec(kind="group_average", group=tuple(r["group"]))
        if r["kind"] == "competitive":
            return RewardSpec(kind="competitive", alpha=r["alpha"], beta=r["beta"])
        return RewardSpec(kind=r["kind"])

    def build_mean_game(self) -> MeanGameSpec:
        m = self.data["meanest"]
        if m["variant"] == "fixed":
            return MeanGameSpec.fixed(m["mus"], m["sigma"])
        return MeanGameSpec.bayesian(m["sigmas"], m["n_samples"], m["tau"],
                                     m["tau0"])


def parse_config_text(text: str) -> ExperimentConfig:
    """Validate YAML text into a canonical :class:`ExperimentConfig`."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from exc
    kind = _choice(_as_map(raw, "config", ("kind", "seed"),
                           ("protocol", "clients", "strategies", "payment",
                            "reward", "sweep", "bounds", "meanest"))
                   .get("kind"), "config.kind", KINDS)
    sections = _SECTIONS[kind]
    for key in raw:
        if key in ("kind", "seed"):
            continue
        if key not in sections["required"] and key not in sections["optional"]:
            _fail("config", f"section {key!r} does not apply to kind {kind!r}")
    for key in sections["required"]:
        if key not in raw:
            _fail("config", f"kind {kind!r} requires section {key!r}")
    data: dict = {"kind": kind,
                  "seed": _integer(raw["seed"], "config.seed", minimum=0,
                                   maximum=2 ** 64 - 1)}

    if kind == "meanest":
        data["meanest"] = _validate_meanest(raw["meanest"], "config.meanest")
        config = ExperimentConfig(data=data)
        config.build_mean_game()
        return config

    protocol = _validate_protocol(raw["protocol"], "config.protocol")
    clients = _validate_clients(raw["clients"], "config.clients",
                                protocol["n_clients"], protocol["dimension"])
    strategies = raw.get("strategies")
    if strategies is None:
        strategies = [{"kind": "truthful"} for _ in range(protocol["n_clients"])]
    if not isinstance(strategies, list):
        _fail("config.strategies", "expected a list")
    if len(strategies) != protocol["n_clients"]:
        _fail("config.strategies", f"protocol declares {protocol['n_clients']} "
                                   f"clients, found {len(strategies)} strategies")
    strategies = [_validate_strategy(s, f"config.strategies[{k}]")
                  for k, s in enumerate(strategies)]

    data["protocol"] = protocol
    data["clients"] = clients
    data["strategies"] = strategies

    # resolve ensemble defaults so the canonical config is explicit
    built = resolve_domain_radii([
        ClientObjective(objective=_build_objective(c["objective"]),
                        noise_sigma=c["sigma"], domain_radius=c["domain_radius"])
        for c in clients])
    for entry, client in zip(clients, built):
        entry["domain_radius"] = float(client.domain_radius)

    lr = protocol["learning_rate"]
    if lr["kind"] == "inverse_time" and ("m" not in lr or "H" not in lr):
        consts = conservative_constants(built,
                                        allow_approximate=lr["allow_approximate"])
        lr.setdefault("m", consts.m)
        lr.setdefault("H", consts.H)
        if lr["m"] <= 0:
            _fail("config.protocol.learning_rate",
                  f"derived curvature lower bound m = {lr['m']:.6g} is not "
                  f"positive; supply m explicitly")

    if kind in ("run", "bounds"):
        payment = raw.get("payment", {"kind": "none"})
        payment = _validate_payment(payment, "config.payment")
        if payment["kind"] == "calibrated" and not all(
                k in payment for k in ("m", "H", "L")):
            consts = conservative_constants(
                built, allow_approximate=payment["allow_approximate"])
            payment.setdefault("m", consts.m)
            payment.setdefault("H", consts.H)
            payment.setdefault("L", consts.L)
            if payment["m"] <= 0 or payment["L"] <= 0:
                _fail("config.payment", "derived constants are not positive; "
                                        "supply m, H, L explicitly")
        data["payment"] = payment

    if kind in ("run", "sweep"):
        reward = _validate_reward(raw.get("reward", {"kind": "neg_loss"}),
                                  "config.reward")
        for k, j in enumerate(reward.get("group", [])):
            if j >= protocol["n_clients"]:
                _fail(f"config.reward.group[{k}]",
                      f"client index {j} is out of range "
                      f"(n_clients = {protocol['n_clients']})")
        data["reward"] = reward
    if kind == "sweep":
        data["sweep"] = _validate_sweep(raw["sweep"], "config.sweep",
                                        protocol["n_clients"])
    if kind == "bounds":
        data["bounds"] = _validate_bounds(raw["bounds"], "config.bounds",
                                          protocol["horizon"])

    config = ExperimentConfig(data=data)
    # Trial-build everything so construction errors surface at parse time
    # with their own exit codes (a calibrated schedule that refuses raises
    # ScheduleError here, not ConfigurationError).
    config.build_clients()
    config.build_plans()
    config.build_protocol()
    config.build_payment_schedule()
    if kind in ("run", "sweep"):
        config.build_reward()
    return config


def parse_config(path) -> ExperimentConfig:
    """Read and validate the YAML config at ``path``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
