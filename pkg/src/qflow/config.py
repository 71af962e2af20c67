"""Run configuration files.

Line-oriented ``key = value`` pairs under ``[section]`` headers; ``#`` starts a
comment.  Values are parsed as JSON-ish scalars (numbers, true/false, bare
strings) or bracketed lists ``[a, b, c]``; lists are only meaningful for
sweeps.  Every validation error names the offending line.
"""
import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path

from .algebra import SpeedLaw
from .body import Backend, make_body
from .errors import ConfigError, ConstructionError, DomainError
from .flow import FlowConfig

OUTPUT_ROOT_ENV = "QFLOW_OUTPUT_ROOT"

SCHEMA = {
    "shape": {"constructor": str, "N": int, "seed": int, "R": float, "a": float, "b": float, "c": float,
              "modes": int, "margin": float, "backend": str},
    "law": {"n": int, "k": int, "alpha": float},
    "flow": {"t_end": float, "dt_init": float, "dt_safety": float, "roundness_stop": float,
             "volume_correct": bool, "snapshot_stride": int, "max_step_retries": int, "error_tol": float,
             "fixed_dt": bool, "max_steps": int},
    "audit": {"roundness_tol": float, "drift_budget": float, "refinement": bool},
    "output": {"directory": str, "formats": str},
}
FORMATS = ("csv", "json", "bodies", "svg")


def _scalar(text, kind, line):
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"expected true/false, got {text!r}", line)
    if kind is str:
        return text.strip().strip('"').strip("'")
    try:
        if kind is int:
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(text)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {text!r}", line) from None


def _value(text, kind, line):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError("unterminated list", line)
        inner = text[1:-1].strip()
        items = [s.strip() for s in inner.split(",")] if inner else []
        return [_scalar(s, kind, line) for s in items if s]
    return _scalar(text, kind, line)


@dataclass
class RawConfig:
    """Parsed sections: {section: {key: (value, line)}}; list values kept as lists."""

    sections: dict = field(default_factory=dict)
    path: str = ""

    def get(self, section, key, default=None):
        entry = self.sections.get(section, {}).get(key)
        return default if entry is None else entry[0]

    def line(self, section, key):
        entry = self.sections.get(section, {}).get(key)
        return None if entry is None else entry[1]

    def list_fields(self):
        """(section, key) pairs whose value is a list, in file order."""
        out = []
        for sec, entries in self.sections.items():
            for key, (v, _) in entries.items():
                if isinstance(v, list) and not (sec == "output" and key == "formats"):
                    out.append((sec, key))
        return out

    def cells(self):
        """Cartesian product over list-valued fields; each cell is a scalar RawConfig."""
        lists = self.list_fields()
        for sec, key in lists:
            if not self.get(sec, key):
                raise ConfigError(f"empty list for {sec}.{key}", self.line(sec, key))
        values = [self.get(sec, key) for sec, key in lists]
        for combo in itertools.product(*values):
            sections = {s: dict(e) for s, e in self.sections.items()}
            for (sec, key), v in zip(lists, combo):
                sections[sec][key] = (v, sections[sec][key][1])
            yield dict(zip([f"{s}.{k}" for s, k in lists], combo)), RawConfig(sections, self.path)


def parse_text(text, path=""):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", lineno)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, value = (s.strip() for s in line.partition("="))
        kind = SCHEMA[current].get(key)
        if kind is None:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if current == "output" and key == "formats":
            v = [s.strip() for s in value.strip("[]").split(",") if s.strip()]
            for f in v:
                if f not in FORMATS:
                    raise ConfigError(f"unknown output format {f!r}; choose from {', '.join(FORMATS)}", lineno)
        else:
            v = _value(value, kind, lineno)
        sections[current][key] = (v, lineno)
    return RawConfig(sections, str(path))


def load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, path)


@dataclass
class RunSpec:
    """Fully validated single-run configuration."""

    shape: dict
    N: int
    law: SpeedLaw
    flow: FlowConfig
    roundness_tol: float
    drift_budget: float
    refinement: bool
    directory: Path
    formats: tuple
    source: str = ""

    def make_body(self, N=None):
        params = {k: v for k, v in self.shape.items() if k != "constructor"}
        params["backend"] = Backend(params["backend"])
        return make_body(self.shape["constructor"], self.N if N is None else N, **params)

    def as_dict(self):
        return {"shape": dict(self.shape), "N": self.N,
                "law": {"n": self.law.n, "k": self.law.k, "alpha": self.law.alpha},
                "flow": {k: getattr(self.flow, k) for k in SCHEMA["flow"]},
                "audit": {"roundness_tol": self.roundness_tol, "drift_budget": self.drift_budget,
                          "refinement": self.refinement},
                "formats": list(self.formats)}


def default_output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def build(raw):
    """Validate a scalar RawConfig into a RunSpec."""
    lists = raw.list_fields()
    if lists:
        sec, key = lists[0]
        raise ConfigError(f"{sec}.{key} is a list; use 'qflow sweep' for parameter lists", raw.line(sec, key))

    def need(sec, key):
        v = raw.get(sec, key)
        if v is None:
            raise ConfigError(f"missing required key {key!r} in [{sec}]")
        return v

    ctor = need("shape", "constructor")
    N = need("shape", "N")
    shape = {"constructor": ctor}
    for key in ("R", "a", "b", "c", "modes", "margin", "seed"):
        if raw.get("shape", key) is not None:
            shape[key] = raw.get("shape", key)
    backend_name = raw.get("shape", "backend")
    if backend_name is not None:
        try:
            shape["backend"] = Backend(backend_name).value
        except ValueError:
            raise ConfigError(f"unknown backend {backend_name!r}", raw.line("shape", "backend")) from None
    elif ctor == "ellipsoid_rev":
        shape["backend"] = Backend.AXISYMMETRIC.value
    elif ctor in ("ellipse", "sphere", "random_trig"):
        shape["backend"] = Backend.CIRCLE.value
    if ctor == "ellipse" and shape["backend"] != Backend.CIRCLE.value:
        raise ConfigError("ellipse lives on the CIRCLE backend", raw.line("shape", "backend"))
    if ctor == "ellipsoid_rev" and shape["backend"] != Backend.AXISYMMETRIC.value:
        raise ConfigError("ellipsoid_rev lives on the AXISYMMETRIC backend", raw.line("shape", "backend"))
    backend = Backend(shape["backend"])

    try:
        law = SpeedLaw(raw.get("law", "n", backend.n), need("law", "k"), need("law", "alpha"))
    except DomainError as exc:
        bad = "alpha" if "alpha" in str(exc) else ("k" if "k must" in str(exc) else "n")
        raise ConfigError(str(exc), raw.line("law", bad)) from None
    if law.n != backend.n:
        raise ConfigError(f"law n={law.n} does not match the {backend.value} backend (n={backend.n})",
                          raw.line("law", "n"))

    flow_kw = {k: raw.get("flow", k) for k in SCHEMA["flow"] if raw.get("flow", k) is not None}
    if "t_end" not in flow_kw:
        raise ConfigError("missing required key 't_end' in [flow]")
    try:
        flow = FlowConfig(law, **flow_kw)
    except DomainError as exc:
        key = next((k for k in flow_kw if k in str(exc)), None)
        raise ConfigError(str(exc), raw.line("flow", key) if key else None) from None

    spec = RunSpec(
        shape=shape, N=N, law=law, flow=flow,
        roundness_tol=raw.get("audit", "roundness_tol", flow.roundness_stop if flow.roundness_stop > 0 else 1e-3),
        drift_budget=raw.get("audit", "drift_budget", 1e-4),
        refinement=raw.get("audit", "refinement", True),
        directory=Path(raw.get("output", "directory") or default_output_root() / Path(raw.path or "run").stem),
        formats=tuple(raw.get("output", "formats") or FORMATS),
        source=raw.path,
    )
    try:
        spec.make_body()
    except (ConstructionError, DomainError, KeyError) as exc:
        raise ConfigError(f"cannot build shape: {exc}", raw.line("shape", "constructor")) from None
    return spec
