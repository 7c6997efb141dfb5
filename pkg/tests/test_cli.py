import pytest

from ridepool.cli import main
from ridepool.demand import read_request_rows
from ridepool.synth import write_instance

REPORTS = ("metrics.csv", "assignments.csv", "distributions.csv", "by_category.csv", "fleet.csv", "stops.csv",
           "config.toml")


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    root = tmp_path_factory.mktemp("inst")
    cfg = write_instance(root, rows=10, cols=10, vehicles=8, requests=80, seed=3, end=1800,
                         extra_config={"ch_cache": "ch.bin"})
    assert main(["prepare-ch", "--config", str(cfg)]) == 0
    return root, cfg


def simulate(cfg, out, *extra):
    assert main(["simulate", "--config", str(cfg), "--out", str(out), *extra]) == 0
    return out


def test_simulate_twice_gives_identical_outputs(instance, tmp_path):
    _, cfg = instance
    a = simulate(cfg, tmp_path / "a", "--seed", "42")
    b = simulate(cfg, tmp_path / "b", "--seed", "42")
    for name in REPORTS[:-1]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "timing.csv").exists()


def test_thread_count_keeps_assignments(instance, tmp_path):
    _, cfg = instance
    one = simulate(cfg, tmp_path / "t1", "--threads", "1")
    eight = simulate(cfg, tmp_path / "t8", "--threads", "8")
    assert (one / "assignments.csv").read_bytes() == (eight / "assignments.csv").read_bytes()


def test_echoed_config_reproduces_run(instance, tmp_path):
    _, cfg = instance
    first = simulate(cfg, tmp_path / "first", "--tbatch", "10")
    again = simulate(first / "config.toml", tmp_path / "again")
    for name in REPORTS[:-1]:
        assert (first / name).read_bytes() == (again / name).read_bytes(), name
    text = (again / "config.toml").read_text()
    assert "t_batch = 10" in text and str(tmp_path / "again") in text


def test_no_meeting_points_flag(instance, tmp_path):
    _, cfg = instance
    out = simulate(cfg, tmp_path / "nomp", "--no-meeting-points")
    assert "meeting_points = false" in (out / "config.toml").read_text()
    rows = (out / "assignments.csv").read_text().splitlines()
    header = rows[0].split(",")
    acc, egr = header.index("access"), header.index("egress")
    assert all(r.split(",")[acc] == "0" and r.split(",")[egr] == "0" for r in rows[1:])


def test_report_reproduces_metrics(instance, tmp_path, capsys):
    _, cfg = instance
    run_dir = simulate(cfg, tmp_path / "run")
    assert main(["report", str(run_dir), "--out", str(tmp_path / "rep")]) == 0
    assert (run_dir / "metrics.csv").read_bytes() == (tmp_path / "rep" / "metrics.csv").read_bytes()
    assert "share_rp," in capsys.readouterr().out


def test_missing_vehicles_file_exits_2(instance, tmp_path, capsys):
    root, cfg = instance
    bad = root / "bad.toml"
    bad.write_text(cfg.read_text().replace('vehicles = "vehicles.csv"', 'vehicles = "nowhere.csv"'))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert f"{root}/nowhere.csv" in capsys.readouterr().err


@pytest.mark.parametrize("text, code", [
    ("network_dir = 'n'\n", 2),  # no seed
    ("seed = 1\nbogus = 3\n", 2),
    ("seed = 1\nt_batch = -1\n", 2),
    ("seed = [\n", 2),
])
def test_invalid_configs(tmp_path, text, code, capsys):
    (tmp_path / "c.toml").write_text(text)
    assert main(["simulate", "--config", str(tmp_path / "c.toml")]) == code
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_flag_fails(instance):
    _, cfg = instance
    assert main(["simulate", "--config", str(cfg), "--frobnicate"]) != 0


def test_validate_and_resample(instance, tmp_path, capsys):
    root, cfg = instance
    assert main(["validate", "--config", str(cfg), "--prefix", "40"]) == 0
    assert "no invariant violations in the first 40 requests" in capsys.readouterr().out
    out = tmp_path / "res.csv"
    assert main(["resample", "--config", str(cfg), "--out", str(out)]) == 0
    before, after = read_request_rows(root / "requests.csv"), read_request_rows(out)
    assert [r["id"] for r in before] == [r["id"] for r in after]
    assert [r["origin_edge"] for r in before] == [r["origin_edge"] for r in after]
