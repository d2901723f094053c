import json
from importlib import resources

import numpy as np
import pytest

from rdstab.cli import main
from rdstab.certifier import Certificate
from rdstab.config import ScenarioConfig, load_scenario

# the bundled scenario with a shorter, coarser simulation
TOY = (
    (resources.files("rdstab") / "scenarios" / "dirichlet.yaml")
    .read_text()
    .replace("name: dirichlet", "name: toy")
    .replace("n_sim: 100", "n_sim: 40")
    .replace("t_end: 10.0", "t_end: 6.0")
)

ZERO5 = "[0, 0, 0, 0, 0]"

# the input channel is disconnected, so the unstable LTI modes cannot be moved
DECOUPLED = TOY.replace('b: ["-7/2", "-3/2", "-1/10", "1/2", 1]', f"b: {ZERO5}")

# nothing couples the blocks at all and the LTI part grows on its own
RUNAWAY = DECOUPLED.replace('c: ["-1/10", "-1/3", -4, "7/8", "7/8"]', f"c: {ZERO5}")


@pytest.fixture()
def toy_path(tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(TOY)
    return path


def test_eigen_reports_spectra(toy_path, capsys):
    assert main(["eigen", str(toy_path), "--n", "4"]) == 0
    out = capsys.readouterr().out
    assert "q_c = 4" in out
    assert "lambda_i" in out
    assert "tail constant at N = 4" in out


def test_certify_writes_certificate(toy_path, tmp_path, capsys):
    cert_path = tmp_path / "cert.json"
    code = main(["certify", str(toy_path), "--out", str(cert_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "certificate: N = 3" in out
    assert "margin" in out
    data = json.loads(cert_path.read_text())
    assert data["format"] == "rdstab-certificate"
    assert data["n_modes"] == 3


def test_simulate_against_certificate(toy_path, tmp_path, capsys):
    cert_path = tmp_path / "cert.json"
    assert main(["certify", str(toy_path), "--out", str(cert_path)]) == 0
    csv_path = tmp_path / "run.csv"
    code = main([
        "simulate", str(toy_path),
        "--certificate", str(cert_path), "--out", str(csv_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "certificate verified" in out
    assert "envelope check passed" in out
    header = csv_path.read_text().splitlines()[0]
    assert header == "t,x_1,x_2,x_3,x_4,x_5,y,trace,h1_sq,x_norm_sq,lyapunov"
    meta = json.loads((tmp_path / "run.csv.meta.json").read_text())
    assert meta["scenario"]["name"] == "toy"
    assert meta["certificate_sha256"] == Certificate.load(cert_path).sha256()

    # the embedded scenario must round-trip into an equivalent config
    again = ScenarioConfig.from_dict(meta["scenario"])
    cfg = load_scenario(toy_path)
    assert (again.theta1, again.theta2, again.zeta_m) == (cfg.theta1, cfg.theta2, cfg.zeta_m)
    assert again.targets == cfg.targets
    assert np.array_equal(again.ode.a, cfg.ode.a)
    assert np.array_equal(again.x0, cfg.x0)
    assert (again.sim.n_sim, again.sim.t_end) == (cfg.sim.n_sim, cfg.sim.t_end)


def test_simulate_without_certificate(toy_path, tmp_path):
    csv_path = tmp_path / "plain.csv"
    assert main(["simulate", str(toy_path), "--out", str(csv_path), "--t-end", "1.0"]) == 0
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 102
    assert rows[1].split(",")[-1] == "nan"


def test_infeasible_target_exits_one(tmp_path, capsys):
    path = tmp_path / "decoupled.yaml"
    path.write_text(DECOUPLED)
    assert main(["certify", str(path)]) == 1
    assert "infeasible" in capsys.readouterr().out


def test_divergent_simulation_exits_four(tmp_path, capsys):
    path = tmp_path / "runaway.yaml"
    path.write_text(RUNAWAY)
    code = main(["simulate", str(path), "--out", str(tmp_path / "r.csv"), "--t-end", "40"])
    assert code == 4
    assert "divergence" in capsys.readouterr().err


def test_missing_file_exits_two(tmp_path, capsys):
    assert main(["certify", str(tmp_path / "nope.yaml")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_malformed_yaml_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("plant: [unclosed\n")
    assert main(["eigen", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err


def test_unknown_key_exits_two(tmp_path, capsys):
    path = tmp_path / "extra.yaml"
    path.write_text(TOY.replace("  zeta_m: 0.25", "  zeta_m: 0.25\n  colour: blue"))
    assert main(["eigen", str(path)]) == 2
    assert "colour" in capsys.readouterr().err


def test_tampered_certificate_exits_three(toy_path, tmp_path, capsys):
    cert_path = tmp_path / "cert.json"
    assert main(["certify", str(toy_path), "--out", str(cert_path)]) == 0
    data = json.loads(cert_path.read_text())
    data["eta"] = data["eta"] + 3.0
    cert_path.write_text(json.dumps(data))
    code = main([
        "simulate", str(toy_path),
        "--certificate", str(cert_path), "--out", str(tmp_path / "x.csv"),
    ])
    assert code == 3
    assert "failed verification" in capsys.readouterr().out


def test_unknown_subcommand_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["polish"])
    assert exc.value.code == 2


def test_reproduce_bundled_scenario(tmp_path, capsys):
    code = main(["reproduce", "dirichlet", "--outdir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "open-loop PDE dominant rate" in out
    assert "target N = 3" in out and "target N = 9" in out
    assert "envelope check passed" in out
    assert (tmp_path / "dirichlet_certificate_n3.json").exists()
    assert (tmp_path / "dirichlet_certificate_n9.json").exists()
    csv_path = tmp_path / "dirichlet_trajectory.csv"
    assert csv_path.exists()
    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    assert len(data["t"]) == 1001
    assert (tmp_path / "dirichlet_trajectory.csv.meta.json").exists()
