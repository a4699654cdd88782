import subprocess
import sys

import numpy as np
import pytest

from evdeblur import io
from evdeblur.cli import main


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "translating_bars", "32", "5", "1,0", "0.1", str(out)]) == 0
    return out


def test_simulate_file_contract(tmp_path, capsys):
    assert main(["simulate", "translating_bars", "64", "7", "1,0", "0.1", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert [n for n in names if n.startswith("frame_")] == [f"frame_{i}.imf" for i in range(1, 8)]
    assert [n for n in names if n.startswith("flow_")] == [f"flow_{i}.flo" for i in range(1, 7)]
    assert {"blur.imf", "events.evt", "run.txt"} <= set(names)
    assert len(names) == 7 + 6 + 3
    assert capsys.readouterr().out.count("wrote ") == 16


def test_single_frame_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "translating_bars", "64", "1", "1,0", "0.1", str(tmp_path)])
    assert exc.value.code == 2
    assert "T must be >= 2" in capsys.readouterr().err


def test_simulate_deterministic(tmp_path, sim_dir):
    assert main(["simulate", "translating_bars", "32", "5", "1,0", "0.1", str(tmp_path)]) == 0
    for p in sim_dir.iterdir():
        if p.name != "run.txt":
            assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_deblur_and_eval(tmp_path, sim_dir, capsys):
    rec = tmp_path / "rec"
    assert main(["deblur", str(sim_dir / "blur.imf"), str(sim_dir / "events.evt"), str(rec), "-T", "5"]) == 0
    assert len(list(rec.glob("frame_*.imf"))) == 5
    assert "tau_used = 0.1" in (rec / "run.txt").read_text()
    capsys.readouterr()
    assert main(["eval", str(rec), str(sim_dir), "--min-psnr", "30"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and lines[-1].startswith("mean psnr ")


def test_deblur_estimate_tau(tmp_path, sim_dir, capsys):
    assert main(["deblur", str(sim_dir / "blur.imf"), str(sim_dir / "events.evt"), str(tmp_path),
                 "-T", "5", "--estimate-tau", "0.05,0.1,0.2"]) == 0
    assert "estimated tau 0.1" in capsys.readouterr().out


def test_deblur_size_mismatch(tmp_path, sim_dir, capsys):
    io.write_imf(tmp_path / "small.imf", np.zeros((4, 4)))
    assert main(["deblur", str(tmp_path / "small.imf"), str(sim_dir / "events.evt"), str(tmp_path), "-T", "5"]) == 1
    assert "does not match" in capsys.readouterr().err


def test_eval_self(sim_dir, capsys):
    assert main(["eval", str(sim_dir), str(sim_dir)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert all(" psnr inf ssim 1.000000" in line for line in out)


def test_guidance(tmp_path, sim_dir):
    out = tmp_path / "g.imf"
    assert main(["guidance", str(sim_dir / "events.evt"), str(sim_dir / "flow_1.flo"), str(out),
                 "--interval", "2", "--threads", "2"]) == 0
    g = io.read_imf(out)
    assert g.shape == (32, 32) and np.all(np.isfinite(g))
    assert (tmp_path / "g.imf.run.txt").exists()


def test_guidance_interval_outside(tmp_path, sim_dir, capsys):
    assert main(["guidance", str(sim_dir / "events.evt"), str(sim_dir / "flow_1.flo"), str(tmp_path / "g.imf"),
                 "--interval", "5"]) == 1
    assert "outside exposure" in capsys.readouterr().err


def test_gradcheck_exit_code(capsys):
    assert main(["gradcheck", "--configs", "3"]) == 0
    assert "configs 3 PASS" in capsys.readouterr().out


def test_missing_file(tmp_path, capsys):
    assert main(["eval", str(tmp_path / "nope"), str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "evdeblur", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "IMF1" in res.stdout
