import pytest

from lognormal_qmc.config import (DEFAULT_MODEL, ExperimentConfig, default_model, model_from_mapping,
                                  model_to_text, parse_text)
from lognormal_qmc.exceptions import ParameterError
from lognormal_qmc.wavelet import WaveletModel


def test_parse_text():
    raw = parse_text("# comment\n\nd = 1  # trailing\nbasis = hat\n")
    assert raw == {"d": "1", "basis": "hat"}
    with pytest.raises(ParameterError):
        parse_text("d = 1\nd = 2\n")
    with pytest.raises(ParameterError):
        parse_text("just words\n")


def test_model_from_mapping_defaults():
    assert model_from_mapping({}) == default_model()
    m = model_from_mapping({"basis": "hat", "beta1": "3", "theta": "0.5", "c_rho": "none", "seed": "4"})
    assert m.basis == "hat" and m.beta1 == 3.0 and m.ell0 == DEFAULT_MODEL["ell0"]
    with pytest.raises(ParameterError):
        model_from_mapping({"L": "two"})


def test_model_text_roundtrip():
    m = WaveletModel(beta1=4.0, theta=1.2, L=5, c_rho=0.05)
    text = model_to_text(m, seed=3)
    assert "seed = 3" in text
    assert model_from_mapping(parse_text(text)) == m


def test_experiment_config_roundtrip_and_hash():
    cfg = ExperimentConfig(n_list=(31, 61, 127, 251), R=8, n_ref=2039, output="out")
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert ExperimentConfig(n_list=(31, 61, 127, 251), R=8, n_ref=2039).config_hash() == cfg.config_hash()
    assert ExperimentConfig(n_list=(31, 61, 127, 251), R=9, n_ref=2039).config_hash() != cfg.config_hash()
    assert hash(cfg) == hash(back)
    assert cfg.mesh_h == 1 / 256


def test_experiment_config_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("beta1 = 4\ntheta = 1.2\nell0 = 0\nL = 4\nn_list = 31, 61, 127, 251\nR = 8\nn_ref = 2039\n")
    cfg = ExperimentConfig.from_file(path)
    assert cfg.model.L == 4 and cfg.n_list == (31, 61, 127, 251)


@pytest.mark.parametrize("kwargs", [dict(R=4), dict(n_list=(61, 31)), dict(n_list=()),
                                    dict(n_ref=100), dict(q=0.0), dict(delta=1.0), dict(n_elements=1)])
def test_experiment_config_invariants(kwargs):
    with pytest.raises(ParameterError):
        ExperimentConfig(**kwargs)


def test_unknown_keys_rejected():
    with pytest.raises(ParameterError):
        ExperimentConfig.from_text("colour = red\n")
