import json

import numpy as np
import pytest

from randamp.bitstore import BitString, read_bits, write_bits
from randamp.cli import main
from randamp.extractor import ShiftExtractorSpec, extract_naive
from randamp.pipeline import ProtocolConfig


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_then_estimate(tmp_path, capsys):
    path = str(tmp_path / "t.bin")
    code, out, _ = run(capsys, "simulate", "--n", "20000", "--target-s", "2.5", "--out", path)
    assert code == 0
    code, out, _ = run(capsys, "estimate", path, "--series", str(tmp_path / "s.csv"), "--chunk", "5000")
    doc = json.loads(out)
    assert doc["n"] == 20000 and abs(doc["S"] - 2.5) < 0.1
    assert (tmp_path / "s.csv").read_text().startswith("block,S,S_mu")


def test_params_round_trip(capsys):
    code, out, _ = run(capsys, "params", "--m", "20431465")
    doc = json.loads(out)
    assert doc["m_roundtrip"] == 20431465
    assert doc["sv_bits_total"] == 5368709120
    assert doc["implied_eta"] == pytest.approx(0.1343, abs=5e-4)


def test_extract_argument_order(tmp_path, capsys):
    rng = np.random.default_rng(3)
    ab, z = (BitString.from_bits(rng.integers(0, 2, 300)) for _ in range(2))
    write_bits(ab, tmp_path / "ab.bin")
    write_bits(z, tmp_path / "z.bin")
    for flag in ([], ["--naive"]):
        code, _, _ = run(capsys, "extract", str(tmp_path / "ab.bin"), str(tmp_path / "z.bin"),
                         "--m", "40", "--out", str(tmp_path / "k.bin"), *flag)
        assert code == 0
        assert read_bits(tmp_path / "k.bin") == extract_naive(ShiftExtractorSpec(300, 40), z, ab)


def test_run_and_dry_run(tmp_path, capsys):
    cfg = ProtocolConfig(n=2**14, mu=0.0, seed=1)
    cfg.save(tmp_path / "c.json")
    code, out, _ = run(capsys, "run", str(tmp_path / "c.json"), "--dry-run")
    assert json.loads(out)["sv_bits_total"] == 4 * 2**14
    code, out, _ = run(capsys, "run", str(tmp_path / "c.json"), "--out", str(tmp_path / "o"))
    assert code == 0 and (tmp_path / "o" / "report.json").exists()


def test_timing_and_sweep(capsys):
    code, out, _ = run(capsys, "timing")
    doc = json.loads(out)
    assert doc["passed"] and doc["limiting_device"]["name"] == "QRNG"
    code, out, _ = run(capsys, "sweep", "--grid", "2.271,2.6", "--eta", "constant", "--rate", "0.134294")
    lines = out.strip().splitlines()
    assert lines[0] == "S,S_mu,n,reason" and len(lines) == 3


def test_stats_and_pad(tmp_path, capsys):
    bits = BitString.from_bits(np.random.default_rng(0).integers(0, 2, 20000))
    write_bits(bits, tmp_path / "b.bin")
    code, out, _ = run(capsys, "stats", str(tmp_path / "b.bin"))
    assert [r["name"] for r in json.loads(out)] == ["monobit", "block_frequency", "runs"]
    run(capsys, "pad", str(tmp_path / "b.bin"), str(tmp_path / "b.bin"), "--out", str(tmp_path / "p.bin"))
    assert read_bits(tmp_path / "p.bin") == BitString.zeros(20000)


def test_errors_exit_nonzero(tmp_path, capsys):
    (tmp_path / "junk.bin").write_bytes(b"nonsense")
    code, _, err = run(capsys, "stats", str(tmp_path / "junk.bin"))
    assert code == 1 and "error" in err
    code, _, _ = run(capsys, "estimate", str(tmp_path / "missing.bin"))
    assert code == 1
