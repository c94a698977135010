import numpy as np
import pytest

from magfp.config import ConfigError, build_config, load_config, parse_config
from magfp.field import Frame

BASE = """
# small grid
[grid]
d_x = 1
d_v = 2
n_x = 5
n_v = 6

field.kind = constant
field.value = 1.0
weight.k = 4
initial.seed = 11
"""


def test_sections_and_dotted_keys_agree():
    a = parse_config("[grid]\nn_x = 5\n")
    b = parse_config("grid.n_x = 5\n")
    assert a == b == {"grid.n_x": 5}


def test_build_defaults():
    cfg = build_config(parse_config(BASE))
    assert cfg.grid.shape == (5, 28)
    assert cfg.p == 2.0 and cfg.seed == 11
    assert cfg.tolerances["conservation"] == 1e-10
    assert cfg.field.sup_norm == pytest.approx(1.0)
    s = cfg.initial_state()
    assert s.frame is Frame.PERTURBATION


@pytest.mark.parametrize("text, line", [
    ("grid.n_x = 5\nbogus.key = 1\n", 2),
    ("grid.n_x = 5\n\ngrid.n_x = 7\n", 3),
    ("grid.n_x = five\n", 1),
    ("[grid]\nno equals here\n", 2),
    ("[bad section]\n", 1),
    ("field.kind = magnetic\n", 1),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f":{line}:"):
        parse_config(text)


def test_missing_seed_is_rejected():
    with pytest.raises(ConfigError, match="seed"):
        build_config(parse_config(BASE.replace("initial.seed = 11", "")))


def test_missing_grid_key():
    with pytest.raises(ConfigError, match="grid.n_v"):
        build_config(parse_config(BASE.replace("n_v = 6", "")))


def test_quadrature_order_too_small():
    with pytest.raises(ConfigError, match="quad_order"):
        build_config(parse_config(BASE + "grid.quad_order = 7\n"))


def test_p_range():
    with pytest.raises(ConfigError, match="run.p"):
        build_config(parse_config(BASE + "run.p = 3\n"))


def test_overrides_take_precedence():
    cfg = build_config(parse_config(BASE), {"field.value": "2.5", "tol.algebraic": "1e-9"})
    assert cfg.field.sup_norm == pytest.approx(2.5)
    assert cfg.tolerances["algebraic"] == 1e-9
    with pytest.raises(ConfigError):
        build_config(parse_config(BASE), {"nope": "1"})


def test_fourier_modes():
    text = BASE.replace("field.kind = constant", "field.kind = fourier").replace("field.value = 1.0", "")
    cfg = build_config(parse_config(text + "field.modes = 0:1:0.5:0.0\nfield.offset = 0.2\n"))
    # B(x) = 0.2 + 0.5 cos x
    assert cfg.field.sup_norm == pytest.approx(0.7, rel=1e-3)
    with pytest.raises(ConfigError, match="modes"):
        build_config(parse_config(text + "field.modes = 0:1:0.5\n"))
    with pytest.raises(ConfigError):
        build_config(parse_config(text + "field.modes = 0:9:0.5:0\n"))


def test_seeded_initial_data_is_reproducible():
    a = build_config(parse_config(BASE)).initial_state()
    b = build_config(parse_config(BASE)).initial_state()
    c = build_config(parse_config(BASE), {"initial.seed": "12"}).initial_state()
    assert np.array_equal(a.vector, b.vector)
    assert not np.array_equal(a.vector, c.vector)


def test_shifted_maxwellian_initial():
    cfg = build_config(parse_config(BASE + "initial.kind = shifted_maxwellian\ninitial.spatial = 0.3\n"))
    s = cfg.initial_state()
    assert abs(s.blocks[cfg.grid.zero_mode, 0]) < 1e-12


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")
