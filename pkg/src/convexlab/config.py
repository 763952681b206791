"""Scenario configuration: INI-style text with typed sections.

Sections: ``[scenario]`` (kind, seed, output), ``[model]`` (mixture paths and
weights), ``[numerics]`` (quadrature, path and strike counts, maturities),
``[slv]`` (two-point mixing spec and particle knobs).  `parse_config` collects
every error with a line reference; `ScenarioConfig.to_text` writes the
canonical form, and parsing that text reproduces the config exactly.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

from .models import VIX_WINDOW, MixtureModel, VolPath, validate_model
from .slv import BernoulliSpec

KINDS = ("simple", "general", "slv", "term_structure")


class ConfigError(Exception):
    """Invalid scenario configuration; `errors` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModelConfig:
    s0: float
    sigma0: float
    t1: float
    tau: float
    weights: tuple
    paths: tuple  # per path: tuple of (break, level) pairs


@dataclass(frozen=True)
class NumericsConfig:
    maturities: tuple = ()
    n_quad_nodes: int = 64
    inner_paths: int = 20000
    n_steps: int = 200
    n_strikes: int = 21


@dataclass(frozen=True)
class SlvConfig:
    y_minus: float
    y_plus: float
    q_minus: float
    sigma0: float
    s_start: float = 1.0
    start_time: float = 0.0
    horizon: float | None = None
    n_particles: int = 200000
    dt: float | None = None
    inner_paths: int | None = None
    n_steps: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description; immutable."""

    kind: str
    seed: int
    out_dir: str = "out"
    threads: int = 1
    exact_locvol: bool = False
    model: ModelConfig | None = None
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    slv: SlvConfig | None = None

    def with_overrides(self, seed=None, out_dir=None, threads=None,
                       exact_locvol=None) -> "ScenarioConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if threads is not None:
            cfg = replace(cfg, threads=int(threads))
        if exact_locvol:
            cfg = replace(cfg, exact_locvol=True)
        return cfg

    def to_text(self) -> str:
        """Canonical textual form; `parse_config` round-trips it exactly."""
        lines = ["[scenario]",
                 f"kind = {self.kind}",
                 f"seed = {self.seed}",
                 f"out_dir = {self.out_dir}",
                 f"threads = {self.threads}",
                 f"exact_locvol = {str(self.exact_locvol).lower()}",
                 ""]
        if self.model is not None:
            m = self.model
            lines += ["[model]",
                      f"s0 = {m.s0!r}",
                      f"sigma0 = {m.sigma0!r}",
                      f"t1 = {m.t1!r}",
                      f"tau = {m.tau!r}",
                      "weights = " + ", ".join(repr(w) for w in m.weights)]
            for i, path in enumerate(m.paths, start=1):
                pairs = ", ".join(f"{b!r}:{lv!r}" for b, lv in path)
                lines.append(f"path_{i} = {pairs}")
            lines.append("")
        n = self.numerics
        lines += ["[numerics]",
                  "maturities = " + ", ".join(repr(t) for t in n.maturities),
                  f"n_quad_nodes = {n.n_quad_nodes}",
                  f"inner_paths = {n.inner_paths}",
                  f"n_steps = {n.n_steps}",
                  f"n_strikes = {n.n_strikes}",
                  ""]
        if self.slv is not None:
            s = self.slv
            lines += ["[slv]",
                      f"y_minus = {s.y_minus!r}",
                      f"y_plus = {s.y_plus!r}",
                      f"q_minus = {s.q_minus!r}",
                      f"sigma0 = {s.sigma0!r}",
                      f"s_start = {s.s_start!r}",
                      f"start_time = {s.start_time!r}",
                      f"n_particles = {s.n_particles}"]
            if s.horizon is not None:
                lines.append(f"horizon = {s.horizon!r}")
            if s.dt is not None:
                lines.append(f"dt = {s.dt!r}")
            if s.inner_paths is not None:
                lines.append(f"inner_paths = {s.inner_paths}")
            if s.n_steps is not None:
                lines.append(f"n_steps = {s.n_steps}")
            lines.append("")
        return "\n".join(lines)


def build_model(cfg: ScenarioConfig) -> MixtureModel:
    m = cfg.model
    paths = [VolPath([b for b, _ in p], [lv for _, lv in p]) for p in m.paths]
    return MixtureModel(paths, m.weights, m.sigma0, m.t1, m.tau, m.s0)


def build_mixing(cfg: ScenarioConfig) -> BernoulliSpec:
    s = cfg.slv
    return BernoulliSpec(y_minus=s.y_minus, y_plus=s.y_plus,
                         q_minus=s.q_minus)


def slv_defaults(cfg: ScenarioConfig, tau: float) -> SlvConfig:
    """Fill the optional mixing-phase knobs from the shared numerics."""
    s = cfg.slv
    return replace(
        s,
        horizon=s.horizon if s.horizon is not None
        else s.start_time + 1.25 * tau,
        dt=s.dt if s.dt is not None else tau / 128.0,
        inner_paths=s.inner_paths if s.inner_paths is not None
        else cfg.numerics.inner_paths,
        n_steps=s.n_steps if s.n_steps is not None else cfg.numerics.n_steps,
    )


class _Reader:
    """Typed key reader over one parsed section, collecting errors with the
    line number of the offending key in the source text."""

    def __init__(self, section, data, raw_lines, errors):
        self.section = section
        self.data = dict(data)
        self.raw_lines = raw_lines
        self.errors = errors
        self.seen = set()

    def _line_of(self, key):
        in_section = False
        for i, line in enumerate(self.raw_lines, start=1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                in_section = s[1:-1].strip() == self.section
            elif in_section and (s.split("=", 1)[0].strip() == key
                                 if "=" in s else False):
                return i
        return None

    def err(self, key, msg):
        line = self._line_of(key)
        where = f"line {line}: " if line else ""
        self.errors.append(f"{where}[{self.section}] {key}: {msg}")

    def get(self, key, kind, required=False, default=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.err(key, "missing required key")
            return default
        raw = self.data[key].strip()
        try:
            if kind is bool:
                if raw.lower() not in ("true", "false", "0", "1", "yes", "no"):
                    raise ValueError
                return raw.lower() in ("true", "1", "yes")
            if kind is float and not math.isfinite(float(raw)):
                raise ValueError
            return kind(raw)
        except ValueError:
            self.err(key, f"expected {kind.__name__}, got {raw!r}")
            return default

    def get_list(self, key, kind, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.err(key, "missing required key")
            return ()
        raw = self.data[key].strip()
        if not raw:
            return ()
        out = []
        for part in raw.split(","):
            try:
                out.append(kind(part.strip()))
            except ValueError:
                self.err(key, f"expected comma-separated {kind.__name__} "
                              f"values, got {part.strip()!r}")
                return ()
        return tuple(out)

    def get_pairs(self, key):
        """Parse 'break:level, break:level, ...' pairs."""
        self.seen.add(key)
        raw = self.data[key].strip()
        pairs = []
        for part in raw.split(","):
            try:
                b, lv = part.split(":")
                pairs.append((float(b), float(lv)))
            except ValueError:
                self.err(key, f"expected break:level pairs, got {part.strip()!r}")
                return ()
        return tuple(pairs)

    def finish(self, allow_prefix: str | None = None):
        for key in self.data:
            if key in self.seen:
                continue
            if allow_prefix and key.startswith(allow_prefix):
                continue
            self.err(key, "unknown key")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario config, raising `ConfigError` with every
    problem found (unknown keys, type mismatches, violated invariants)."""
    errors = []
    raw_lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from exc

    known = {"scenario", "model", "numerics", "slv"}
    for sec in parser.sections():
        if sec not in known:
            errors.append(f"unknown section [{sec}]")

    if not parser.has_section("scenario"):
        raise ConfigError(["missing [scenario] section"])

    sc = _Reader("scenario", parser["scenario"], raw_lines, errors)
    kind = sc.get("kind", str, required=True, default="")
    seed = sc.get("seed", int, required=True)
    out_dir = sc.get("out_dir", str, default="out")
    threads = sc.get("threads", int, default=1)
    exact = sc.get("exact_locvol", bool, default=False)
    sc.finish()
    if kind and kind not in KINDS:
        sc.err("kind", f"must be one of {', '.join(KINDS)}")

    model_cfg = None
    needs_model = kind in ("simple", "general", "term_structure")
    if parser.has_section("model"):
        mr = _Reader("model", parser["model"], raw_lines, errors)
        s0 = mr.get("s0", float, default=1.0)
        sigma0 = mr.get("sigma0", float, required=True)
        t1 = mr.get("t1", float, required=True)
        tau = mr.get("tau", float, default=VIX_WINDOW)
        weights = mr.get_list("weights", float, required=True)
        path_keys = sorted((k for k in mr.data if k.startswith("path_")),
                           key=lambda k: int(k.split("_", 1)[1]))
        paths = tuple(mr.get_pairs(k) for k in path_keys)
        mr.finish(allow_prefix="path_")
        if not path_keys:
            mr.err("path_1", "missing: at least one path_<i> key is required")
        if weights and paths and len(weights) != len(paths):
            mr.err("weights", f"{len(weights)} weights for {len(paths)} paths")
        if not errors and sigma0 is not None and t1 is not None:
            model_cfg = ModelConfig(s0=s0, sigma0=sigma0, t1=t1, tau=tau,
                                    weights=weights, paths=paths)
    elif needs_model:
        errors.append(f"[model] section is required for kind={kind}")

    numerics = NumericsConfig()
    if parser.has_section("numerics"):
        nr = _Reader("numerics", parser["numerics"], raw_lines, errors)
        numerics = NumericsConfig(
            maturities=nr.get_list("maturities", float),
            n_quad_nodes=nr.get("n_quad_nodes", int, default=64),
            inner_paths=nr.get("inner_paths", int, default=20000),
            n_steps=nr.get("n_steps", int, default=200),
            n_strikes=nr.get("n_strikes", int, default=21),
        )
        nr.finish()

    slv_cfg = None
    needs_slv = kind in ("slv", "term_structure")
    if parser.has_section("slv"):
        sr = _Reader("slv", parser["slv"], raw_lines, errors)
        slv_cfg = SlvConfig(
            y_minus=sr.get("y_minus", float, required=True, default=1.0),
            y_plus=sr.get("y_plus", float, required=True, default=1.0),
            q_minus=sr.get("q_minus", float, required=True, default=0.5),
            sigma0=sr.get("sigma0", float,
                          required=kind == "slv",
                          default=(model_cfg.sigma0 if model_cfg else 0.2)),
            s_start=sr.get("s_start", float, default=1.0),
            start_time=sr.get("start_time", float, default=0.0),
            horizon=sr.get("horizon", float),
            n_particles=sr.get("n_particles", int, default=200000),
            dt=sr.get("dt", float),
            inner_paths=sr.get("inner_paths", int),
            n_steps=sr.get("n_steps", int),
        )
        sr.finish()
    elif needs_slv:
        errors.append(f"[slv] section is required for kind={kind}")

    cfg = ScenarioConfig(kind=kind or "simple", seed=seed or 0,
                         out_dir=out_dir, threads=threads or 1,
                         exact_locvol=bool(exact), model=model_cfg,
                         numerics=numerics, slv=slv_cfg)
    _validate_semantics(cfg, errors, raw_lines)
    if errors:
        raise ConfigError(errors)
    return cfg


def _line_of_key(raw_lines, section, key):
    in_section = False
    for i, line in enumerate(raw_lines, start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            in_section = s[1:-1].strip() == section
        elif in_section and "=" in s and s.split("=", 1)[0].strip() == key:
            return i
    return None


def _validate_semantics(cfg, errors, raw_lines):
    def err(section, key, msg):
        line = _line_of_key(raw_lines, section, key)
        where = f"line {line}: " if line else ""
        errors.append(f"{where}[{section}] {key}: {msg}")

    n = cfg.numerics
    for key, val in (("n_quad_nodes", n.n_quad_nodes),
                     ("inner_paths", n.inner_paths),
                     ("n_steps", n.n_steps),
                     ("n_strikes", n.n_strikes)):
        if val is None or val <= 0:
            err("numerics", key, "must be a positive integer")
    if cfg.threads is not None and cfg.threads <= 0:
        err("scenario", "threads", "must be a positive integer")

    if cfg.model is not None:
        m = cfg.model
        if m.tau is None or m.tau <= 0:
            err("model", "tau", "must be positive")
        if m.t1 is None or m.t1 <= 0:
            err("model", "t1", "must be positive")
        try:
            model = build_model(cfg)
        except ValueError as exc:
            err("model", "path_1", str(exc))
            model = None
        if model is not None:
            report = validate_model(model)
            for f in report.failures:
                err("model", "weights" if "weight" in f else "path_1", f)
            for T in n.maturities:
                if not 0 < T < m.t1:
                    err("numerics", "maturities",
                        f"maturity {T!r} must lie in (0, t1) for VIX runs")

    if cfg.slv is not None:
        s = cfg.slv
        if not 0 < s.y_minus <= s.y_plus:
            err("slv", "y_minus", "levels must satisfy 0 < y_minus <= y_plus")
        elif s.y_plus / s.y_minus > 3.0:
            err("slv", "y_plus", "ratio y_plus/y_minus exceeds the cap of 3")
        if not 0 < s.q_minus < 1:
            err("slv", "q_minus", "must lie strictly inside (0, 1)")
        if s.n_particles is None or s.n_particles < 1000:
            err("slv", "n_particles", "must be at least 1000")
        if s.dt is not None and s.dt <= 0:
            err("slv", "dt", "must be positive")
        if s.s_start is not None and s.s_start <= 0:
            err("slv", "s_start", "must be positive")
        if cfg.kind == "term_structure" and cfg.model is not None:
            t2 = cfg.model.t1 + cfg.model.tau
            if abs(s.start_time) > 1e-15 and abs(s.start_time - t2) > 1e-12:
                err("slv", "start_time",
                    f"must equal the model horizon {t2!r} (or be omitted)")
