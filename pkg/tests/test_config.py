import pytest

from graspspace.config import RunConfig, load_config, parse_config
from graspspace.errors import ConfigError
from graspspace.pipeline import ThresholdPolicy


def test_defaults():
    cfg = RunConfig()
    assert cfg.per_stable == 200 and cfg.trials.per_stable == 100
    assert cfg.primitive_count("cinder_block") == 141
    assert cfg.threshold == ThresholdPolicy("percentile", 60.0)
    big = RunConfig.full_scale()
    assert big.per_stable == 2000 and big.trials.per_stable == 1000


def test_parse_full_file():
    cfg = parse_config("""
[run]
seed = 7
objects = pulley
output_dir = out
workers = 2

[primitives]
counts = pulley:50
per_type = 10

[extend]
per_stable = 30

[hgg]
epochs = 5
kl_weight = 0.5
main_widths = 32, 32

[planner]
threshold = fixed(0.02)
sample_cap = 500

[trials]
per_stable = 4
center = 0.5, 0.1

[workspace]
lo = 0, -1, 0
hi = 1, 1, 1

[eval]
mu = 0.8
""")
    assert cfg.seed == 7 and cfg.objects == ("pulley",) and cfg.workers == 2
    assert cfg.primitive_count("pulley") == 50 and cfg.primitive_count("bent_pipe") == 145
    assert cfg.per_stable == 30
    assert cfg.hgg_train.epochs == 5 and cfg.hgg_train.kl_weight == 0.5
    assert cfg.hgg_arch.main_widths == (32, 32)
    assert cfg.qgg_train == RunConfig().qgg_train
    assert cfg.threshold == ThresholdPolicy("fixed", 0.02)
    assert cfg.planner.sample_cap == 500 and cfg.planner.candidates == 3
    assert cfg.trials.center == (0.5, 0.1)
    assert cfg.workspace.lo == (0.0, -1.0, 0.0)
    assert cfg.eval.mu == 0.8


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[run]\ncolour = red\n",
    "[run]\nseed = many\n",
    "[run]\nworkers = 0\n",
    "[planner]\nthreshold = best\n",
    "[workspace]\nlo = 1, 2\n",
    "[workspace]\nlo = 1, 1, 1\nhi = 0, 0, 0\n",
    "[primitives]\ncounts = pulley:-3\n",
    "[eval]\nmu = 0\n",
    "[hgg]\nepochs = 0\n",
    "no section header\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    p = tmp_path / "ok.ini"
    p.write_text("[run]\nseed = 3\n")
    assert load_config(p).seed == 3
