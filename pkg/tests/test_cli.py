import json
import math
from pathlib import Path

import numpy as np
import pytest

from sospin.cli import main, read_height_grid
from sospin.config import ExperimentConfig, config_from_header
from sospin.errors import GridParseError


def test_config_round_trip_identity():
    cfg = ExperimentConfig(experiment="peaks", beta=3.25, alpha=1.0,
                           disorder_kind="discrete", disorder_values=(1.5, -0.5),
                           disorder_probs=(0.25, 0.75), h_grid=(0.0, 0.1), seed=99)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg
    assert config_from_header("\n".join(cfg.header_lines())) == cfg


def test_config_rejects_unknown_keys():
    from sospin.errors import InputError
    with pytest.raises(InputError):
        ExperimentConfig.from_text("no_such_knob = 3\n")


def test_height_grid_parse_errors(tmp_path):
    good = tmp_path / "g.csv"
    good.write_text("0,0,0\n0,1,0\n")
    grid = read_height_grid(good)
    assert grid.shape == (2, 3) and grid[1, 1] == 1

    ragged = tmp_path / "r.csv"
    ragged.write_text("0,0,0\n0,1\n")
    with pytest.raises(GridParseError) as exc:
        read_height_grid(ragged)
    assert exc.value.row == 2

    bad = tmp_path / "b.csv"
    bad.write_text("0,x,0\n")
    with pytest.raises(GridParseError) as exc:
        read_height_grid(bad)
    assert exc.value.row == 1 and exc.value.col == 2


def test_contours_command_flat_and_spike(tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("0,0,0\n0,0,0\n0,0,0\n")
    out = tmp_path / "flat.json"
    assert main(["contours", "--input", str(flat), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["cylinders"] == [] and rep["roundtrip"] is True

    spike = tmp_path / "spike.csv"
    spike.write_text("0,0,0\n0,2,0\n0,0,0\n")
    out2 = tmp_path / "spike.json"
    assert main(["contours", "--input", str(spike), "--out", str(out2)]) == 0
    rep2 = json.loads(out2.read_text())
    assert len(rep2["cylinders"]) == 1
    assert rep2["cylinders"][0]["intensity"] == 2
    assert rep2["cylinders"][0]["sign"] == 1


def test_contours_random_batch(tmp_path):
    out = tmp_path / "batch.json"
    assert main(["contours", "--random", "200", "--box", "5,5", "--seed", "3",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["failures"] == 0 and rep["fields_checked"] == 200


def test_gfunc_command_and_header_reproducibility(tmp_path):
    cfgfile = tmp_path / "g.cfg"
    cfg = ExperimentConfig(experiment="layering", beta=3.5, alpha=1.0, theta1=1.0037,
                           h_grid=(1e-3, 1e-5, 1e-7), out=str(tmp_path / "g1.csv"))
    cfgfile.write_text(cfg.to_text())
    assert main(["gfunc", "--config", str(cfgfile)]) == 0
    text1 = (tmp_path / "g1.csv").read_text()
    lines = text1.splitlines()
    assert lines[-1].count(",") == 5  # h, G, n_argmax, n_G, upper_bound, bernoulli

    # rerun straight from the produced header: byte-identical data
    recovered = config_from_header(text1).with_overrides(out=str(tmp_path / "g2.csv"))
    cfg2file = tmp_path / "g2.cfg"
    cfg2file.write_text(recovered.to_text())
    assert main(["gfunc", "--config", str(cfg2file)]) == 0
    text2 = (tmp_path / "g2.csv").read_text()
    strip = lambda t: [ln for ln in t.splitlines() if not ln.startswith("# out")]
    assert strip(text1) == strip(text2)


def test_oracle_command_exit_code_and_rows(tmp_path):
    cfgfile = tmp_path / "o.cfg"
    cfg = ExperimentConfig(beta_grid=(3.0,), box=(2, 2), n_grid=(1, 2, 3),
                           out=str(tmp_path / "o.csv"), seed=7)
    cfgfile.write_text(cfg.to_text())
    assert main(["oracle", "--config", str(cfgfile)]) == 0
    rows = [ln for ln in (tmp_path / "o.csv").read_text().splitlines()
            if ln and not ln.startswith("#")]
    header, data = rows[0], rows[1:]
    assert header.startswith("check,")
    assert all(ln.rsplit(",", 2)[-2] == "1" for ln in data)  # every ok column true
    assert all(ln.endswith(",7") for ln in data)             # seed column


def test_mcmc_resume_reproduces_bit_for_bit(tmp_path):
    base = ExperimentConfig(beta=3.0, alpha=0.0, geometry=(4, 8), sweeps=60,
                            seed=11, out=str(tmp_path / "a.csv"))
    (tmp_path / "a.cfg").write_text(base.to_text())
    ck = tmp_path / "chain.ck"
    assert main(["mcmc", "--config", str(tmp_path / "a.cfg"), "--checkpoint", str(ck)]) == 0

    half = base.with_overrides(sweeps=35, out=str(tmp_path / "b.csv"))
    (tmp_path / "b.cfg").write_text(half.to_text())
    ck2 = tmp_path / "half.ck"
    assert main(["mcmc", "--config", str(tmp_path / "b.cfg"), "--checkpoint", str(ck2)]) == 0

    resumed = base.with_overrides(out=str(tmp_path / "c.csv"))
    (tmp_path / "c.cfg").write_text(resumed.to_text())
    ck3 = tmp_path / "resumed.ck"
    assert main(["mcmc", "--config", str(tmp_path / "c.cfg"), "--resume", str(ck2),
                 "--checkpoint", str(ck3)]) == 0
    assert ck.read_bytes() == ck3.read_bytes()


def test_mcmc_curve_output(tmp_path):
    cfg = ExperimentConfig(beta=3.5, alpha=0.0, geometry=(3, 12), sweeps=400,
                           h_grid=(0.0, 0.2, 0.4), replicas=1, seed=5,
                           out=str(tmp_path / "curve.csv"))
    (tmp_path / "m.cfg").write_text(cfg.to_text())
    assert main(["mcmc", "--config", str(tmp_path / "m.cfg")]) == 0
    data = [ln for ln in (tmp_path / "curve.csv").read_text().splitlines()
            if ln and not ln.startswith("#")]
    assert data[0] == "h,contact_fraction,contact_stderr,excess_free_energy,excess_stderr"
    first = data[1].split(",")
    assert float(first[0]) == 0.0 and float(first[3]) == 0.0


def test_experiment_layering_exit_zero(tmp_path):
    cfg = ExperimentConfig(experiment="layering", beta=3.5, alpha=1.0, theta1=1.0037,
                           out=str(tmp_path / "lay.csv"))
    (tmp_path / "l.cfg").write_text(cfg.to_text())
    assert main(["experiment", "--config", str(tmp_path / "l.cfg")]) == 0
    text = (tmp_path / "lay.csv").read_text()
    assert "oscillation" in text


def test_threads_do_not_change_output(tmp_path):
    base = ExperimentConfig(experiment="freeenergy", beta=3.5, alpha=1.0,
                            geometry=(3, 12), replicas=4, h_grid=(-0.1, 0.0, 0.1, 0.2),
                            seed=13, out=str(tmp_path / "t1.csv"))
    (tmp_path / "t1.cfg").write_text(base.to_text())
    assert main(["experiment", "--config", str(tmp_path / "t1.cfg")]) == 0
    two = base.with_overrides(threads=4, out=str(tmp_path / "t2.csv"))
    (tmp_path / "t2.cfg").write_text(two.to_text())
    assert main(["experiment", "--config", str(tmp_path / "t2.cfg")]) == 0
    strip = lambda t: [ln for ln in t.splitlines()
                       if not (ln.startswith("# out") or ln.startswith("# threads"))]
    assert strip((tmp_path / "t1.csv").read_text()) == strip((tmp_path / "t2.csv").read_text())
