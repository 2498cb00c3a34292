"""Run configuration: flat TOML with dotted keys.

Example::

    grid.T = 1.0
    grid.J = 64
    ensemble.N = 50000
    ensemble.seed = 12345
    ensemble.model = "natural"
    terminal.name = "w(T)"
    driver.name = "zero"
    basis.cell_size = 4
    basis.degree = 1
    regression.degree = 2

Every key is listed in :data:`SCHEMA` with its type, default and range.
Unknown keys, wrong types and out-of-range values raise
:class:`~bsdelab.errors.ConfigurationError` naming the key.
"""

import os
from dataclasses import dataclass

import tomli

from .core import MODEL_TAGS, XI_DISTRIBUTIONS, FiltrationModel, build_uniform_grid
from .errors import ConfigurationError, RegistryError

_REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: type
    default: object
    check: object = None     # callable returning an error text or None
    doc: str = ""


def _positive(x):
    return None if x > 0 else "must be > 0"


def _nonneg(x):
    return None if x >= 0 else "must be >= 0"


def _at_least(k):
    return lambda x: None if x >= k else f"must be >= {k}"


def _open_unit(x):
    return None if 0 < x < 1 else "must lie in (0, 1)"


def _one_of(options):
    return lambda x: None if x in options else f"must be one of {sorted(options)}"


def _nonempty_ints(x):
    if not x or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in x):
        return "must be a nonempty list of non-negative integers"
    return None


def _u64(x):
    return None if 0 <= x < 2 ** 64 else "must lie in [0, 2**64)"


SCHEMA = {
    "grid.T": Field(float, 1.0, _positive, "horizon"),
    "grid.J": Field(int, 64, _at_least(1), "number of time steps"),
    "ensemble.N": Field(int, 10000, _at_least(2), "number of paths"),
    "ensemble.seed": Field(int, 0, _u64, "master seed"),
    "ensemble.model": Field(str, "natural", _one_of(set(MODEL_TAGS)), "filtration model"),
    "ensemble.xi_dist": Field(str, "normal", _one_of(set(XI_DISTRIBUTIONS)), "law of xi"),
    "ensemble.xi_params": Field(list, None, None, "parameters of the law of xi"),
    "ensemble.cache": Field(str, "", None, "ensemble cache file (read if present, else written)"),
    "terminal.name": Field(str, "w(T)", None, "terminal-condition registry name"),
    "terminal.value": Field(float, None, None, "value for 'constant'"),
    "terminal.a": Field(float, None, None, "a in g = a + b w for 'integral-of-g-dw''"),
    "terminal.b": Field(float, None, None, "b in g = a + b w"),
    "driver.name": Field(str, "zero", None, "driver registry name"),
    "driver.a": Field(float, None, None, "coefficient of y ('affine')"),
    "driver.b": Field(float, None, None, "coefficient of Y ('affine')"),
    "driver.c": Field(float, None, None, "constant term"),
    "driver.kappa": Field(float, None, None, "amplitude for 'lipschitz-sin'"),
    "basis.cell_size": Field(int, 4, _at_least(1), "knots per time cell"),
    "basis.degree": Field(int, 1, _at_least(0), "state degree of the Galerkin basis"),
    "basis.anchor": Field(str, "knot", _one_of({"knot", "cell-start"}), "state evaluation point"),
    "basis.ridge": Field(float, None, _nonneg, "Gram ridge (default: relative 1e-10)"),
    "regression.degree": Field(int, 2, _at_least(0), "regression polynomial degree"),
    "regression.ridge": Field(float, None, _nonneg, "regression ridge (default: relative 1e-8)"),
    "regression.interactions": Field(bool, True, None, "mixed monomials"),
    "picard.tol": Field(float, 1e-8, _positive, "distance between iterates"),
    "picard.max_iter": Field(int, 50, _at_least(1), "iterations per window"),
    "picard.theta": Field(float, 0.5, _open_unit, "target contraction factor"),
    "picard.max_bisect": Field(int, 8, _at_least(0), "bisection depth limit"),
    "verification.n_tests": Field(int, 20, _at_least(1), "random duality tests"),
    "verification.seed": Field(int, 0, _u64, "test seed"),
    "verification.bias_factor": Field(float, 5.0, _nonneg, "bias tolerance multiplier"),
    "compare.terminal.name": Field(str, None, None, "terminal of the second problem"),
    "compare.terminal.value": Field(float, None, None, ""),
    "compare.terminal.a": Field(float, None, None, ""),
    "compare.terminal.b": Field(float, None, None, ""),
    "compare.terminal.shift": Field(float, None, None, "constant added to the second terminal"),
    "compare.driver.name": Field(str, None, None, "driver of the second problem"),
    "compare.driver.a": Field(float, None, None, ""),
    "compare.driver.b": Field(float, None, None, ""),
    "compare.driver.c": Field(float, None, None, ""),
    "compare.driver.kappa": Field(float, None, None, ""),
    "compare.eq_tol": Field(float, None, _positive, "equality tolerance"),
    "consistency.j1": Field(int, None, _at_least(1), "split knot (default J/2)"),
    "sweep.oracle": Field(str, "w(T)", None, "oracle registry name"),
    "sweep.J_list": Field(list, [16, 64, 256], _nonempty_ints, ""),
    "sweep.N_list": Field(list, [1000, 10000, 100000], _nonempty_ints, ""),
    "sweep.degrees": Field(list, [0, 1, 2], _nonempty_ints, "state degrees of the m study"),
    "sweep.J_N": Field(int, 64, _at_least(1), "grid of the N and m studies"),
    "sweep.n_tests": Field(int, 10, _at_least(1), "duality tests in the N study"),
}


def _coerce(key, value, field):
    kind = field.kind
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigurationError(f"{key}: expected an integer, got a boolean")
    if not isinstance(value, kind):
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {type(value).__name__} {value!r}")
    if kind is float and value != value:
        raise ConfigurationError(f"{key}: NaN is not allowed")
    if field.check is not None:
        msg = field.check(value)
        if msg:
            raise ConfigurationError(f"{key}: {msg} (got {value!r})")
    return value


def _flatten(tree, prefix=""):
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


class RunConfig:
    """Validated configuration; ``values`` maps every schema key to its value (``None`` if unset)."""

    def __init__(self, values, source="<memory>"):
        self.source = source
        self.values = {}
        for key, field in SCHEMA.items():
            self.values[key] = field.default
        for key, v in values.items():
            if key not in SCHEMA:
                raise ConfigurationError(f"{key}: unknown configuration key")
            self.values[key] = None if v is None else _coerce(key, v, SCHEMA[key])
        self._cross_check()

    @classmethod
    def from_text(cls, text, source="<string>"):
        try:
            tree = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc
        return cls(dict(_flatten(tree)), source)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"{path}: cannot read configuration ({exc.strerror})") from exc
        return cls.from_text(text, str(path))

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **updates):
        """Copy with dotted keys replaced; pass keys as ``{"ensemble.seed": 3}`` via ``**``."""
        vals = {k: v for k, v in self.values.items() if v is not None}
        vals.update(updates)
        return RunConfig(vals, self.source)

    def with_seed(self, seed):
        return self.replace(**{"ensemble.seed": seed})

    def _cross_check(self):
        J = self.values["grid.J"]
        j1 = self.values["consistency.j1"]
        if j1 is not None and not 0 < j1 < J:
            raise ConfigurationError(f"consistency.j1: must satisfy 0 < j1 < grid.J={J} (got {j1})")
        xp = self.values["ensemble.xi_params"]
        if xp is not None:
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in xp):
                raise ConfigurationError("ensemble.xi_params: must be a list of numbers")
        from .picard import DRIVERS
        from .problems import TERMINALS
        from .verification import ORACLES
        for key, reg in (("terminal.name", TERMINALS), ("driver.name", DRIVERS),
                         ("compare.terminal.name", TERMINALS), ("compare.driver.name", DRIVERS),
                         ("sweep.oracle", ORACLES)):
            name = self.values[key]
            if name is not None and name not in reg:
                raise RegistryError(key, name, reg)

    # -- object builders
    def grid(self):
        return build_uniform_grid(self["grid.T"], self["grid.J"])

    def model(self):
        kind = self["ensemble.model"]
        if kind == "initial-enlargement":
            params = self["ensemble.xi_params"] or ()
            try:
                return FiltrationModel.initial(self["ensemble.xi_dist"], *params)
            except ConfigurationError as exc:
                raise ConfigurationError(f"ensemble.xi_params: {exc}") from exc
        return FiltrationModel(kind)

    def ensemble(self):
        """Simulate, or load/write the configured cache; a loaded cache must match the config."""
        from .cache import cache_load, cache_save
        from .core import simulate_ensemble
        path = self["ensemble.cache"]
        if path and os.path.exists(path):
            ens = cache_load(path)
            expect = (self["ensemble.N"], self.grid(), self.model(), self["ensemble.seed"])
            if (ens.N, ens.grid, ens.model, ens.seed) != expect:
                raise ConfigurationError(
                    f"ensemble.cache: {path} holds N={ens.N}, J={ens.J}, seed={ens.seed}, "
                    f"model={ens.model.kind}, which differs from the configuration")
            return ens
        ens = simulate_ensemble(self.grid(), self.model(), self["ensemble.N"], self["ensemble.seed"])
        if path:
            cache_save(ens, path)
        return ens

    def _params(self, prefix, names):
        return {n: self[f"{prefix}.{n}"] for n in names if self[f"{prefix}.{n}"] is not None}

    def terminal(self, ens, prefix="terminal"):
        from .problems import make_terminal
        name = self[f"{prefix}.name"]
        return make_terminal(name, ens, f"{prefix}.name", **self._params(prefix, ("value", "a", "b")))

    def driver(self, prefix="driver"):
        from .picard import make_driver
        return make_driver(self[f"{prefix}.name"], f"{prefix}.name",
                           **self._params(prefix, ("a", "b", "c", "kappa")))

    def basis(self, ens):
        from .linear import build_tensor_basis, uniform_cells
        return build_tensor_basis(ens, uniform_cells(ens.J, self["basis.cell_size"]),
                                  self["basis.degree"], self["basis.anchor"])

    def regression_spec(self):
        from .condexp import RegressionSpec
        return RegressionSpec(self["regression.degree"], self["regression.ridge"], True,
                              self["regression.interactions"])

    def picard_config(self):
        from .picard import PicardConfig
        return PicardConfig(self["picard.tol"], self["picard.max_iter"], self["picard.theta"],
                            self["picard.max_bisect"])

    def echo(self):
        """``(key, value)`` pairs of every set key, in schema order."""
        return [(k, v) for k, v in self.values.items() if v is not None]


def load_config(path):
    return RunConfig.from_file(path)
