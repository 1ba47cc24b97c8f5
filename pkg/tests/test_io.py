import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermotled import io
from thermotled.engine import ConfigError, Snapshot
from thermotled.mesh import box_mesh

DATA = Path(__file__).parent / "data"

BASIC = """
[mesh]
box = 0.02, 0.02, 0.02
divisions = 2, 2, 2
kind = T4

[material]
mu = 1190.476
kappa = 19444.444
eta_a = 2380.952
fiber = 1, 0, 0

[thermal]
density = 1060
specific_heat = 3600@37, 4300@90
conductivity = 0.53@37, 0.75@90
perfusion_rate = 26.6
blood_specific_heat = 3617
metabolic_rate = 33800

[expansion]
kind = isotropic
alpha = 1e-4

[viscoelastic]
prony = 0.5:0.58

[sources]
core = power=9705360 center=0.01,0.01,0.01 diameter=0.024 end=2.5
rim = power=100 elements=all start=1

[bcs]
fixed = zmin
prescribed = zmax-xmax:z:0.001
fixed_temperature = xmax:37
force = ymax:0,0,0.5

[sim]
dt = 1e-4
duration = 0.01
expansion = true
temperature_dependent = true

[output]
probes = 1, 27
ablation_thresholds = 40, 60
"""


def test_parse_and_round_trip():
    bundle = io.parse_config(BASIC)
    assert bundle.sim.n_steps == 100
    assert bundle.material.prony.terms == ((0.5, 0.58),)
    assert bundle.material.thermal.specific_heat_at(63.5) == pytest.approx(3950.0)
    assert bundle.bcs.prescribed == (("zmax-xmax", 2, 0.001),)
    assert [s.name for s in bundle.sources] == ["core", "rim"]
    again = io.parse_config(io.serialize_config(bundle))
    assert again == bundle


def test_build_problem_resolves_sets():
    bundle = io.parse_config(BASIC)
    mesh = io.load_problem_mesh(bundle)
    problem = io.build_problem(bundle, mesh)
    zmax, xmax = set(mesh.node_set("zmax")), set(mesh.node_set("xmax"))
    assert set(problem.mech_bcs.prescribed[0].nodes.tolist()) == zmax - xmax
    core = problem.sources.regional[0]
    assert len(core.elements) > 0 and core.end == 2.5
    assert problem.sources.regional[1].start == 1.0
    assert problem.fixed_temperatures[0].value == 37.0
    assert problem.mech_bcs.external_forces[:, 2].sum() == pytest.approx(0.5 * 9)


def test_overrides():
    bundle = io.parse_config(BASIC, ["sim.dt=5e-5", "sim.coupling=thermal_only"])
    assert bundle.sim.dt == 5e-5
    assert bundle.sim.coupling == "thermal_only"
    with pytest.raises(ConfigError):
        io.parse_config(BASIC, ["sim.dt"])


@pytest.mark.parametrize(
    "edit, message",
    [
        (("[sim]", "[sim]\nfoo = 1"), "unknown config key sim.foo"),
        (("dt = 1e-4\n", ""), "missing required key sim.dt"),
        (("dt = 1e-4", "dt = -1"), "sim.dt"),
        (("kind = T4", "kind = Q9"), "Q9"),
        (("prony = 0.5:0.58", "prony = 0.7:0.58, 0.6:1"), "phi"),
        (("zmax-xmax:z", "zmax-xmax:w"), r"x\|y\|z"),
    ],
)
def test_config_errors(edit, message):
    old, new = edit
    text = BASIC.replace(old, new, 1)
    with pytest.raises((ConfigError, ValueError), match=message):
        bundle = io.parse_config(text)
        io.build_problem(bundle, io.load_problem_mesh(bundle))


def test_probe_out_of_range():
    bundle = io.parse_config(BASIC, ["output.probes=999"])
    with pytest.raises(ConfigError, match="out of range"):
        io.build_problem(bundle, io.load_problem_mesh(bundle))


def test_fixed_and_prescribed_overlap_rejected():
    bundle = io.parse_config(BASIC, ["bcs.prescribed=xmin:z:0.001"])
    with pytest.raises(ConfigError, match="both fixed and prescribed"):
        io.build_problem(bundle, io.load_problem_mesh(bundle))


def test_shipped_configs_parse():
    root = Path(__file__).parents[1] / "configs"
    for path in sorted(root.glob("*.cfg")):
        bundle = io.read_config(path)
        io.build_problem(bundle, io.load_problem_mesh(bundle))


def test_golden_single_tet_snapshot(unit_tet, tmp_path):
    snap = Snapshot(
        3, 0.75,
        np.array([70.0, 50.0, 50.0, 37.0]),
        np.array([[0, 0, 0], [1e-3, 0, 0], [0, -2.5e-3, 0], [0, 0, 1.23456789e-4]]),
        det_f=np.array([1.001]),
    )
    path = io.write_snapshot(snap, unit_tet, tmp_path / io.snapshot_name(3))
    assert path.name == "snapshot_000003.vtk"
    assert path.read_text() == (DATA / "single_tet.vtk").read_text()
    back = io.read_snapshot(path)
    assert back["step"] == 3 and back["time"] == 0.75
    np.testing.assert_array_equal(back["temperature"], snap.temperature)
    np.testing.assert_array_equal(back["displacement"], snap.displacement)
    np.testing.assert_array_equal(back["cells"], unit_tet.elements)
    assert back["cell_types"].tolist() == [10]


def test_probe_and_ablation_writers(unit_tet, tmp_path):
    snap = Snapshot(0, 0.0, np.array([70.0, 50.0, 50.0, 50.0]), np.zeros((4, 3)))
    probe = io.ProbeWriter(tmp_path / "p.csv", [2])
    probe(snap)
    abl = io.AblationWriter(tmp_path / "a.csv", unit_tet, [60.0])
    abl(snap)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows == [list(io.PROBE_HEADER), ["0", "2", "50", "0", "0", "0"]]
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == list(io.ABLATION_HEADER)
    assert float(rows[1][2]) == pytest.approx(0.125 / 6.0)
    assert rows[1][3] == "0"


# ----------------------------------------------------------------------------
# isotherm clipping

UNIT = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


def simplex_cdf(values, s):
    """P(f <= s) for f linear on a tet, sampled uniformly (distinct vertex values)."""
    total = 0.0
    for i, fi in enumerate(values):
        denom = np.prod([fj - fi for j, fj in enumerate(values) if j != i])
        total += max(s - fi, 0.0) ** 3 / denom
    return total


def test_corner_case_is_exact():
    # scaled to unit volume
    x = UNIT * 6.0 ** (1.0 / 3.0)
    v = io.tet_clip_volume(x[None], np.array([[70.0, 50.0, 50.0, 50.0]]) - 60.0)[0]
    assert abs(v - 0.125) / 0.125 < 1e-12


def test_symmetric_half_case():
    v = io.tet_clip_volume(UNIT[None], np.array([[1.0, 1.0, -1.0, -1.0]]))[0]
    assert abs(v - 0.5 / 6.0) / (0.5 / 6.0) < 1e-12


def test_all_and_none():
    v = io.tet_clip_volume(np.stack([UNIT, UNIT]), np.array([[1.0, 2, 3, 4], [-1.0, -2, -3, -4]]))
    np.testing.assert_allclose(v, [1 / 6, 0.0], rtol=1e-14)


@pytest.mark.parametrize(
    "values, threshold",
    [
        ((70.0, 55.0, 48.0, 41.0), 60.0),  # one above
        ((70.0, 65.0, 48.0, 41.0), 60.0),  # two above
        ((70.0, 65.0, 62.0, 41.0), 60.0),  # three above
        ((44.0, 39.0, 52.0, 47.0), 45.5),
    ],
)
def test_matches_spline_oracle(values, threshold):
    rng = np.random.default_rng(7)
    x = UNIT + 0.2 * rng.uniform(-1, 1, (4, 3))
    full = abs(np.linalg.det(x[1:] - x[0])) / 6.0
    v = io.tet_clip_volume(x[None], np.array(values)[None] - threshold)[0]
    expected = full * (1.0 - simplex_cdf(values, threshold))
    assert abs(v - expected) <= 1e-12 * full


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4))
def test_complement_and_bounds(values):
    f = np.array(values)[None]
    above = io.tet_clip_volume(UNIT[None], f)[0]
    below = io.tet_clip_volume(UNIT[None], -f)[0]
    assert -1e-15 <= above <= 1 / 6 + 1e-15
    if not np.any(f == 0):
        assert above + below == pytest.approx(1 / 6, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(37, 80), st.floats(0.1, 5))
def test_volume_monotone_in_threshold(th, gap):
    mesh = box_mesh((1, 1, 1), (2, 2, 2), "H8")
    T = 37 + 40 * np.exp(-((mesh.nodes - 0.5) ** 2).sum(axis=1) * 4)
    lo = io.ablation_volume(T, mesh, th).volume
    hi = io.ablation_volume(T, mesh, th + gap).volume
    assert hi <= lo + 1e-15


def test_ablation_box_linear_field():
    mesh = box_mesh((1, 1, 1), (3, 3, 3), "T4")
    T = 37 + 30 * mesh.nodes[:, 0]
    r = io.ablation_volume(T, mesh, 52.0)
    assert r.volume == pytest.approx(0.5, rel=1e-12)
    # exact on the deformed configuration too: uniform stretch doubles x
    disp = np.zeros_like(mesh.nodes)
    disp[:, 0] = mesh.nodes[:, 0]
    assert io.ablation_volume(T, mesh, 52.0, disp).volume == pytest.approx(1.0, rel=1e-12)
