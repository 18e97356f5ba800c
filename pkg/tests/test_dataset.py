import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspspace.dataset import (
    COLUMNS,
    TEMPLATES,
    GraspDataset,
    GraspRecord,
    NormStats,
    denormalize,
    fit_norm,
    load_csv,
    merge,
    normalize,
    normalize_many,
    save_csv,
    synth_primitives,
)
from graspspace.errors import DegenerateStatsError, ParseError, ValidationError
from graspspace.evaluation import evaluate_grasp
from graspspace.objects import builtin_object

PLANE = np.array([0.0, 0.0, 1.0, 0.05])
coord = st.floats(-0.3, 0.3, allow_nan=False)
unit = st.floats(-1, 1, allow_nan=False)


@st.composite
def records(draw):
    q = np.array([draw(unit) for _ in range(4)])
    if np.linalg.norm(q) < 1e-2:
        q = np.array([0.0, 0.0, 0.0, 1.0])
    quality = draw(st.one_of(st.none(), st.floats(0, 0.2)))
    return GraspRecord([draw(coord) for _ in range(3)], q / np.linalg.norm(q), draw(st.floats(0, math.pi / 2)),
                       PLANE, draw(st.integers(0, 3)), quality)


@settings(max_examples=30)
@given(st.lists(records(), min_size=0, max_size=8))
def test_csv_round_trip(tmp_path_factory, recs):
    ds = GraspDataset(tuple(recs), "probe", "generated")
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    save_csv(ds, path)
    back = load_csv(path)
    assert back == ds
    # a second write of the loaded data is byte-identical
    again = path.with_name("again.csv")
    save_csv(back, again)
    assert again.read_bytes() == path.read_bytes()


def _write(tmp_path, rows, header=True):
    path = tmp_path / "hand.csv"
    lines = ([",".join(COLUMNS)] if header else []) + rows
    path.write_text("\n".join(lines) + "\n")
    return path


def test_hand_authored_file(tmp_path):
    path = _write(tmp_path, ["0.1,0,0.2,0,0,0,1,0.5,0,0,1,0.05,0,", "0.1,0,0.2,0,0,0,1,0.5,0,0,1,0.05,1,0.03"])
    ds = load_csv(path, "probe")
    assert ds.object_name == "probe" and ds.provenance == "primitive"
    assert ds.records[0].quality is None
    assert ds.records[1].quality == 0.03
    assert ds.stable_pose_ids() == [0, 1]


def test_short_row_reports_line(tmp_path):
    path = _write(tmp_path, ["0.1,0,0.2,0,0,0,1,0.5,0,0,1,0.05,0,", "0.1,0,0.2,0,0,0,1,0.5,0,0,1"])
    with pytest.raises(ParseError) as err:
        load_csv(path, "probe")
    assert err.value.line == 3
    assert "line 3" in str(err.value)


def test_bad_files(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, ["1,2"], header=False))
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, ["0.1,0,0.2,0,0,0,1,zz,0,0,1,0.05,0,"]))
    with pytest.raises(ValidationError):
        load_csv(_write(tmp_path, ["0.1,0,0.2,0,0,0,2,0.5,0,0,1,0.05,0,"]))
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv")


def test_record_validation():
    with pytest.raises(ValidationError):
        GraspRecord([0, 0, 0], [0, 0, 0, 1], 1.7, PLANE, 0)
    with pytest.raises(ValidationError):
        GraspRecord([0, 0, 0], [0, 0, 0, 1], 0.2, PLANE, 0, quality=-0.1)
    with pytest.raises(ValidationError):
        GraspRecord([np.nan, 0, 0], [0, 0, 0, 1], 0.2, PLANE, 0)
    # canonical sign
    r = GraspRecord([0, 0, 0], [0, 0, 0, -1], 0.2, PLANE, 0)
    assert np.array_equal(r.orientation, [0, 0, 0, 1])
    # pi/2 survives the nine-digit rounding
    assert GraspRecord([0, 0, 0], [0, 0, 0, 1], math.pi / 2, PLANE, 0).spread <= math.pi / 2


def test_merge():
    a = GraspDataset((GraspRecord([0, 0, 0], [0, 0, 0, 1], 0.1, PLANE, 0),), "x")
    b = GraspDataset((GraspRecord([1, 0, 0], [0, 0, 0, 1], 0.1, PLANE, 1),), "x")
    m = merge([a, b])
    assert len(m) == 2 and m.provenance == "extended"
    with pytest.raises(ValidationError):
        merge([a, GraspDataset((), "y")])


def test_normalization_examples():
    stats = NormStats([0, -1, 0, 0], [1, 1, 2, math.pi / 2])
    lo = GraspRecord([0, -1, 0], [0, 0, 0, 1], 0.0, PLANE, 0)
    hi = GraspRecord([1, 1, 2], [0, 0, 0, 1], math.pi / 2, PLANE, 0)
    assert np.allclose(normalize(lo, stats)[[0, 1, 2, 7]], 0)
    assert np.allclose(normalize(hi, stats)[[0, 1, 2, 7]], 1)
    # quaternion and plane pass through untouched
    assert np.array_equal(normalize(hi, stats)[3:7], hi.orientation)
    assert np.array_equal(normalize(hi, stats)[8:], hi.plane)


def test_degenerate_stats():
    recs = tuple(GraspRecord([0.1, y, 0.0], [0, 0, 0, 1], 0.2, PLANE, 0) for y in (0.0, 0.1))
    with pytest.raises(DegenerateStatsError):
        fit_norm(GraspDataset(recs, "x"))
    with pytest.raises(DegenerateStatsError):
        fit_norm(GraspDataset((), "x"))


@settings(max_examples=30)
@given(st.lists(records(), min_size=3, max_size=10))
def test_normalize_round_trip(recs):
    ds = GraspDataset(tuple(recs), "x")
    try:
        stats = fit_norm(ds)
    except DegenerateStatsError:
        return
    v = normalize_many(ds.records, stats)
    assert np.all(v[:, [0, 1, 2, 7]] >= -1e-12) and np.all(v[:, [0, 1, 2, 7]] <= 1 + 1e-12)
    back = denormalize(v, stats)
    assert np.allclose(back, [r.values() for r in ds.records], atol=1e-12)


@pytest.fixture(scope="module")
def pulley_primitives():
    obj = builtin_object("pulley")
    return obj, synth_primitives(obj, 5, np.random.default_rng(0), total=30)


def test_synthesized_primitives(pulley_primitives):
    obj, ds = pulley_primitives
    assert len(ds) == 30 and ds.provenance == "primitive"
    ds.check_object(obj)
    # spreads come only from the template table
    allowed = {round(s, 6) for t in TEMPLATES for s in t.spreads}
    assert {round(r.spread, 6) for r in ds.records} <= allowed
    for r in ds.records[:10]:
        out = evaluate_grasp(obj, obj.stable_pose(r.stable_pose_id), r.to_config())
        assert out.success and out.quality == pytest.approx(r.quality, rel=1e-8)


def test_synthesis_is_seeded():
    obj = builtin_object("pulley")
    a = synth_primitives(obj, 3, np.random.default_rng(4), total=8)
    b = synth_primitives(obj, 3, np.random.default_rng(4), total=8)
    assert a == b
    with pytest.raises(ValueError):
        synth_primitives(obj, 0, np.random.default_rng(4))
