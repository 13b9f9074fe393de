"""Scenario files: a chart plus a frame field ``F`` and/or connection matrices.

The format is TOML::

    name = "rotation"
    n = 2
    bounds = [[-2.0, 2.0], [-1.5, 1.5]]
    seed = 42
    base = [0.0, 0.0]

    [F]
    rows = [["cos(x1)", "-sin(x1)"], ["sin(x1)", "cos(x1)"]]

    [gamma]
    x1 = [["0", "-1"], ["1", "0"]]
    x2 = [["0", "0"], ["0", "0"]]

See ``docs/scenario-format.md`` for the full description.
"""
from __future__ import annotations

import hashlib
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chart import Chart, MatrixField, check_invertible
from .connection import Connection, derive_connection
from .errors import ExprSyntaxError, ScenarioError
from .transport import TransportLaw

SEED_ENV = "FLATT_SAMPLE_SEED"
DEFAULT_SEED = 42
INVERTIBILITY_POINTS = 20
CONSISTENCY_TOL = 1e-8
BUNDLED = Path(__file__).resolve().parent / "scenarios"

_TOP_KEYS = {"name", "n", "bounds", "seed", "base", "F", "gamma"}


@dataclass
class Scenario:
    name: str
    n: int
    bounds: tuple
    F: list | None = None
    gamma: list | None = None
    base: tuple | None = None
    seed: int = DEFAULT_SEED
    path: str | None = None
    sha256: str = ""

    def __post_init__(self):
        self.chart = Chart(self.bounds)
        if self.base is None:
            self.base = tuple(float(v) for v in self.chart.center)
        self._law = None
        self._connection = None

    @property
    def has_F(self) -> bool:
        return self.F is not None

    def matrix_field(self) -> MatrixField:
        if self.F is None:
            raise ScenarioError("scenario defines no F", path=self.path)
        return MatrixField.from_strings(self.F, self.n, self.chart)

    def law(self) -> TransportLaw:
        if self._law is None:
            self._law = TransportLaw(self.chart, self.matrix_field(), self.name)
        return self._law

    def connection(self) -> Connection:
        """The derived connection when ``F`` is present, else the supplied one."""
        if self._connection is None:
            if self.F is not None:
                self._connection = derive_connection(self.law())
            else:
                self._connection = self.supplied_connection()
        return self._connection

    def supplied_connection(self) -> Connection:
        if self.gamma is None:
            raise ScenarioError("scenario defines no gamma", path=self.path)
        return Connection.from_strings(self.chart, self.gamma)

    def info(self) -> dict:
        return {"name": self.name, "n": self.n, "sha256": self.sha256}


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^[ \t]*(\[{re.escape(key)}\]|{re.escape(key)}[ \t]*=)", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _string_matrix(value, n, what, fail):
    if (not isinstance(value, list) or len(value) != n
            or any(not isinstance(r, list) or len(r) != n for r in value)):
        fail(f"{what} must be an {n}x{n} array of strings")
    out = []
    for row in value:
        for v in row:
            if not isinstance(v, (str, int, float)) or isinstance(v, bool):
                fail(f"{what} entries must be expression strings, got {v!r}")
        out.append([str(v) for v in row])
    return out


def parse_scenario(text: str, path: str | None = None, seed_override: int | None = None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ScenarioError(f"malformed scenario file: {exc}", line, path) from exc

    def fail(msg, key=None):
        raise ScenarioError(msg, _line_of(text, key) if key else None, path)

    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        fail(f"unknown key {unknown[0]!r}", unknown[0])
    for key in ("name", "n", "bounds"):
        if key not in data:
            fail(f"missing required key {key!r}")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        fail(f"n must be a positive integer, got {n!r}", "n")
    try:
        bounds = tuple((float(lo), float(hi)) for lo, hi in data["bounds"])
        Chart(bounds)
    except (TypeError, ValueError) as exc:
        fail(f"bad bounds: {exc}", "bounds")
    if len(bounds) != n:
        fail(f"bounds has {len(bounds)} intervals but n = {n}", "bounds")

    F = gamma = None
    if "F" in data:
        table = data["F"]
        if not isinstance(table, dict) or set(table) != {"rows"}:
            fail("[F] must contain exactly one key 'rows'", "F")
        F = _string_matrix(table["rows"], n, "F.rows", lambda m: fail(m, "rows"))
    if "gamma" in data:
        table = data["gamma"]
        keys = [f"x{k}" for k in range(1, n + 1)]
        if not isinstance(table, dict) or sorted(table) != sorted(keys):
            fail(f"[gamma] must define exactly the keys {', '.join(keys)}", "gamma")
        gamma = [_string_matrix(table[k], n, f"gamma.{k}", lambda m, k=k: fail(m, k)) for k in keys]
    if F is None and gamma is None:
        fail("scenario needs an [F] table, a [gamma] table, or both")

    seed = data.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool):
        fail(f"seed must be an integer, got {seed!r}", "seed")
    if seed_override is not None:
        seed = int(seed_override)

    base = data.get("base")
    if base is not None:
        try:
            base = tuple(float(v) for v in base)
        except (TypeError, ValueError):
            fail("base must be an array of numbers", "base")
        if len(base) != n:
            fail(f"base has {len(base)} coordinates but n = {n}", "base")
        if not Chart(bounds).contains(base):
            fail(f"base {base} lies outside the chart", "base")

    sc = Scenario(
        name=str(data["name"]), n=n, bounds=bounds, F=F, gamma=gamma, base=base, seed=seed,
        path=path, sha256=hashlib.sha256(text.encode()).hexdigest(),
    )
    # parse everything now so syntax errors carry a line number
    try:
        if F is not None:
            mf = sc.matrix_field()
        if gamma is not None:
            sc.supplied_connection()
    except ExprSyntaxError as exc:
        line = None
        bad = getattr(exc, "text", "")
        if bad:
            idx = text.find(bad)
            line = text.count("\n", 0, idx) + 1 if idx >= 0 else None
        raise ScenarioError(f"bad expression: {exc}", line, path) from exc

    if F is not None:
        check_invertible(mf, sc.chart.samples(INVERTIBILITY_POINTS), "F")
        if gamma is not None:
            pts = sc.chart.samples(INVERTIBILITY_POINTS)
            derived = derive_connection(sc.law()).components_many(pts)
            supplied = sc.supplied_connection().components_many(pts)
            gap = float(np.max(np.abs(derived - supplied)))
            if not gap < CONSISTENCY_TOL:
                fail(f"gamma disagrees with the connection derived from F by {gap:.3e}", "gamma")
    return sc


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ScenarioError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def resolve(path) -> Path:
    """``path`` itself, or a bundled scenario of that name."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED / p.name, BUNDLED / f"{p.name}.toml"):
        if cand.exists():
            return cand
    return p


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    """Read and validate a scenario file.

    ``FLATT_SAMPLE_SEED`` overrides the file's seed unless ``seed_override``
    is given explicitly.
    """
    p = resolve(path)
    text = p.read_text(encoding="utf-8")
    if seed_override is None:
        seed_override = env_seed()
    return parse_scenario(text, str(path), seed_override)


def bundled(name: str) -> Scenario:
    return load_scenario(BUNDLED / f"{name}.toml")


CATALOG = ("identity", "diag-exp", "shear", "rotation", "polar-jacobian")
