import numpy as np
import pytest

from bsdelab import RunConfig
from bsdelab.config import SCHEMA
from bsdelab.errors import ConfigurationError, RegistryError

BASE = """
grid.T = 1.0
grid.J = 8
ensemble.N = 500
ensemble.seed = 4
"""


def test_defaults_and_dotted_keys():
    cfg = RunConfig.from_text(BASE + 'terminal.name = "constant"\nterminal.value = 2\n')
    assert cfg["grid.J"] == 8
    assert cfg["terminal.value"] == 2.0 and isinstance(cfg["terminal.value"], float)
    assert cfg["regression.degree"] == SCHEMA["regression.degree"].default
    assert cfg["driver.name"] == "zero"


def test_table_syntax_equivalent_to_dotted():
    a = RunConfig.from_text(BASE + "basis.cell_size = 2\n")
    b = RunConfig.from_text(BASE + "[basis]\ncell_size = 2\n")
    assert a.values == b.values


def test_unknown_key_named():
    with pytest.raises(ConfigurationError, match="grid.K: unknown"):
        RunConfig.from_text(BASE + "grid.K = 3\n")


@pytest.mark.parametrize("line, key", [
    ('grid.J = "eight"', "grid.J"),
    ("grid.J = 0", "grid.J"),
    ("grid.T = -1.0", "grid.T"),
    ("ensemble.seed = -1", "ensemble.seed"),
    ("picard.theta = 1.5", "picard.theta"),
    ('ensemble.model = "weird"', "ensemble.model"),
    ("regression.interactions = 1", "regression.interactions"),
    ("verification.n_tests = true", "verification.n_tests"),
    ("sweep.J_list = []", "sweep.J_list"),
    ("consistency.j1 = 8", "consistency.j1"),
])
def test_invalid_values_name_the_key(line, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        head = "" if line.startswith("grid.J") else "grid.J = 8\n"
        RunConfig.from_text(head + line + "\n")


def test_duplicate_key_dies_with_line_number():
    with pytest.raises(ConfigurationError, match="line"):
        RunConfig.from_text(BASE + "grid.J = 9\n")


def test_syntax_error_reports_line():
    with pytest.raises(ConfigurationError, match="line 3"):
        RunConfig.from_text("grid.T = 1.0\ngrid.J = 8\ngrid.N = = 3\n")


@pytest.mark.parametrize("key", ["terminal.name", "driver.name", "compare.driver.name", "sweep.oracle"])
def test_registry_miss_names_field(key):
    with pytest.raises(RegistryError) as info:
        RunConfig.from_text(BASE + f'{key} = "nonexistent"\n')
    assert info.value.field == key
    assert key in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigurationError, match="cannot read"):
        RunConfig.from_file("/nonexistent/run.toml")


def test_replace_and_seed():
    cfg = RunConfig.from_text(BASE)
    assert cfg.with_seed(99)["ensemble.seed"] == 99
    assert cfg["ensemble.seed"] == 4
    with pytest.raises(ConfigurationError):
        cfg.replace(**{"basis.nope": 1})


def test_initial_enlargement_params():
    cfg = RunConfig.from_text(BASE + 'ensemble.model = "initial-enlargement"\n'
                              'ensemble.xi_dist = "bernoulli"\nensemble.xi_params = [0.25]\n')
    ens = cfg.ensemble()
    assert set(np.unique(ens.xi)) <= {0.0, 1.0}
    bad = RunConfig.from_text(BASE + 'ensemble.model = "initial-enlargement"\n'
                              'ensemble.xi_dist = "uniform"\nensemble.xi_params = [1.0]\n')
    with pytest.raises(ConfigurationError, match="ensemble.xi_params"):
        bad.model()


def test_cache_written_then_reused(tmp_path):
    path = tmp_path / "ens.bin"
    cfg = RunConfig.from_text(BASE + f'ensemble.cache = "{path}"\n')
    a = cfg.ensemble()
    assert path.exists()
    b = cfg.ensemble()
    assert np.array_equal(a.dw, b.dw)
    with pytest.raises(ConfigurationError, match="ensemble.cache"):
        cfg.with_seed(5).ensemble()


def test_builders():
    cfg = RunConfig.from_text(BASE + 'driver.name = "affine"\ndriver.a = 0.5\nbasis.cell_size = 2\n')
    ens = cfg.ensemble()
    assert ens.N == 500 and ens.J == 8
    assert cfg.driver().K == 0.5
    assert cfg.basis(ens).m == 4 * 2
    assert cfg.regression_spec().degree == 2
    assert cfg.picard_config().theta == 0.5
    with pytest.raises(ConfigurationError, match="driver.name"):
        RunConfig.from_text(BASE + 'driver.name = "zero"\n').replace(
            **{"driver.name": "affine", "driver.kappa": 1.0}).driver()
