"""Command line behavior: flows, exit codes, and output channels."""

import json

import pytest

from flexrate import load_features
from flexrate.cli import (
    EXIT_CODEC_MISMATCH,
    EXIT_ERROR,
    EXIT_INSUFFICIENT_DATA,
    EXIT_OK,
    main,
)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def corpus(tmp_path, capsys):
    """Synthetic semantic/acoustic pair plus a fitted codec file."""
    sem = tmp_path / "utt.sem.flxf"
    ac = tmp_path / "utt.ac.flxf"
    codec = tmp_path / "codec.flxq"
    for kind, path in (("semantic", sem), ("acoustic", ac)):
        code, _, _ = run(
            capsys,
            "synth", "--kind", "piecewise", "--segments", "30", "--dim", "6",
            "--seed", "5", "--stream", kind, "--out", str(path),
        )
        assert code == EXIT_OK
    code, out, _ = run(
        capsys,
        "fit", "--semantic", str(sem), "--acoustic", str(ac),
        "--fsq-dims", "2", "--fsq-levels", "5", "--rvq-layers", "3",
        "--rvq-size", "8", "--iters", "5", "--seed", "0", "--tau", "0.9",
        "--out", str(codec),
    )
    assert code == EXIT_OK
    fit_info = json.loads(out)
    return sem, ac, codec, fit_info


class TestVersion:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        out = capsys.readouterr().out
        assert "flexrate 0.1.0" in out
        assert "FLXF 1" in out and "FLXQ 1" in out and "FLXC 1" in out


class TestSynth:
    def test_walk_reports_geometry(self, tmp_path, capsys):
        out_path = tmp_path / "walk.flxf"
        code, out, _ = run(
            capsys,
            "synth", "--kind", "walk", "--frames", "40", "--dim", "4",
            "--rate", "25/3", "--out", str(out_path),
        )
        assert code == EXIT_OK
        info = json.loads(out)
        assert info["frames"] == 40
        assert info["rate_hz"] == "25/3"
        seq = load_features(out_path)
        assert seq.num_frames == 40
        assert str(seq.frame_rate_hz) == "25/3"


class TestFit:
    def test_fit_reports_fingerprint_and_writes_codec(self, corpus):
        sem, ac, codec, fit_info = corpus
        assert codec.is_file()
        assert fit_info["fingerprint"].startswith("0x")
        assert fit_info["codebook_size"] == 25
        assert fit_info["rvq_layers"] == 3

    def test_mismatched_pair_counts(self, corpus, capsys):
        sem, ac, codec, _ = corpus
        code, _, err = run(
            capsys,
            "fit", "--semantic", str(sem), str(sem), "--acoustic", str(ac),
            "--out", "x.flxq",
        )
        assert code == EXIT_ERROR
        assert "error" in err

    def test_mismatched_pair_dims(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        wide = tmp_path / "wide.ac.flxf"
        code, _, _ = run(
            capsys,
            "synth", "--kind", "piecewise", "--segments", "30", "--dim", "9",
            "--seed", "5", "--stream", "acoustic", "--out", str(wide),
        )
        assert code == EXIT_OK
        code, _, err = run(
            capsys,
            "fit", "--semantic", str(sem), "--acoustic", str(wide),
            "--out", str(tmp_path / "x.flxq"),
        )
        assert code == EXIT_ERROR
        assert "dimension" in err

    def test_insufficient_data_exit_code(self, corpus, capsys):
        sem, ac, codec, _ = corpus
        code, _, err = run(
            capsys,
            "fit", "--semantic", str(sem), "--acoustic", str(ac),
            "--rvq-size", "4096", "--out", "x.flxq",
        )
        assert code == EXIT_INSUFFICIENT_DATA
        assert "insufficient" in err

    def test_missing_input_file(self, tmp_path, capsys):
        code, _, err = run(
            capsys,
            "fit", "--semantic", str(tmp_path / "nope.flxf"),
            "--acoustic", str(tmp_path / "nope2.flxf"),
            "--out", str(tmp_path / "x.flxq"),
        )
        assert code == EXIT_ERROR
        assert "not found" in err


class TestEncodeDecode:
    def encode(self, capsys, sem, ac, codec, out, *extra):
        return run(
            capsys,
            "encode", "--semantic", str(sem), "--acoustic", str(ac),
            "--codec", str(codec), "--out", str(out), *extra,
        )

    def test_encode_decode_roundtrip(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        stream = tmp_path / "utt.flxc"
        code, out, _ = self.encode(
            capsys, sem, ac, codec, stream, "--tau", "0.9", "--n-q", "4"
        )
        assert code == EXIT_OK
        info = json.loads(out)
        assert info["merged_frames"] < info["source_frames"]
        assert 0 < info["avg_rate_hz"] <= 12.5
        assert info["semantic_kbps"] < info["total_kbps"]

        decoded = tmp_path / "utt.dec.flxf"
        code, out, _ = run(
            capsys,
            "decode", "--bitstream", str(stream), "--codec", str(codec),
            "--out", str(decoded),
        )
        assert code == EXIT_OK
        info = json.loads(out)
        source = load_features(sem)
        assert info["frames"] == source.num_frames
        assert load_features(decoded).num_frames == source.num_frames

    def test_target_rate_drive(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        stream = tmp_path / "t.flxc"
        code, out, err = self.encode(
            capsys, sem, ac, codec, stream, "--target-rate", "25/2", "--n-q", "3"
        )
        assert code == EXIT_OK
        assert json.loads(out)["tau"] == 1.0
        assert "resolved to tau" in err

    def test_tau_and_target_rate_are_exclusive(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        with pytest.raises(SystemExit) as excinfo:
            self.encode(
                capsys, sem, ac, codec, tmp_path / "x.flxc",
                "--tau", "0.9", "--target-rate", "6.25",
            )
        assert excinfo.value.code == 2

    def test_one_of_them_is_required(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        with pytest.raises(SystemExit) as excinfo:
            self.encode(capsys, sem, ac, codec, tmp_path / "x.flxc")
        assert excinfo.value.code == 2

    def test_codec_mismatch_exit_code(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        other = tmp_path / "other.flxq"
        code, _, _ = run(
            capsys,
            "fit", "--semantic", str(sem), "--acoustic", str(ac),
            "--fsq-dims", "2", "--fsq-levels", "5", "--rvq-layers", "3",
            "--rvq-size", "8", "--iters", "5", "--seed", "9", "--tau", "0.9",
            "--out", str(other),
        )
        assert code == EXIT_OK
        stream = tmp_path / "utt.flxc"
        code, _, _ = self.encode(
            capsys, sem, ac, codec, stream, "--tau", "0.9", "--n-q", "4"
        )
        assert code == EXIT_OK
        code, _, err = run(
            capsys,
            "decode", "--bitstream", str(stream), "--codec", str(other),
            "--out", str(tmp_path / "y.flxf"),
        )
        assert code == EXIT_CODEC_MISMATCH
        assert "codec mismatch" in err


class TestSweepAndReport:
    def test_sweep_csv_to_stdout(self, corpus, capsys):
        sem, _, _, _ = corpus
        code, out, _ = run(
            capsys, "sweep", "--input", str(sem), "--taus", "0.7,0.9,1.0"
        )
        assert code == EXIT_OK
        lines = out.strip().split("\n")
        assert lines[0] == "tau,avg_rate_hz,payload_kbps"
        assert len(lines) == 4
        rates = [float(line.split(",")[1]) for line in lines[1:]]
        assert rates == sorted(rates)
        assert rates[-1] == 12.5

    def test_sweep_csv_to_file(self, corpus, tmp_path, capsys):
        sem, _, _, _ = corpus
        out_path = tmp_path / "curve.csv"
        code, out, err = run(
            capsys,
            "sweep", "--input", str(sem), "--taus", "0.9,1.0",
            "--out", str(out_path),
        )
        assert code == EXIT_OK
        assert out == ""
        assert "wrote 2 points" in err
        assert out_path.read_text().startswith("tau,")

    def test_report_with_annotations(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        stream = tmp_path / "utt.flxc"
        run(
            capsys,
            "encode", "--semantic", str(sem), "--acoustic", str(ac),
            "--codec", str(codec), "--out", str(stream),
            "--tau", "0.9", "--n-q", "4",
        )
        ann = tmp_path / "ann.txt"
        ann.write_text("# intervals\n0.0 0.2 opening vowel\n\n0.2 0.5 noise\n")
        code, out, _ = run(
            capsys, "report", "--bitstream", str(stream),
            "--annotations", str(ann),
        )
        assert code == EXIT_OK
        lines = out.strip().split("\n")
        records = [json.loads(line) for line in lines]
        assert records[-1]["type"] == "summary"
        assert all(r["type"] == "frame" for r in records[:-1])
        assert "opening vowel" in records[0]["labels"]

    def test_report_rejects_bad_annotation_line(self, corpus, tmp_path, capsys):
        sem, ac, codec, _ = corpus
        stream = tmp_path / "utt.flxc"
        run(
            capsys,
            "encode", "--semantic", str(sem), "--acoustic", str(ac),
            "--codec", str(codec), "--out", str(stream),
            "--tau", "1.0", "--n-q", "4",
        )
        ann = tmp_path / "bad.txt"
        ann.write_text("0.0 only-two-fields\n")
        code, _, err = run(
            capsys, "report", "--bitstream", str(stream),
            "--annotations", str(ann),
        )
        assert code == EXIT_ERROR
        assert "start end label" in err


class TestCheck:
    def test_self_tests_pass(self, capsys):
        code, out, _ = run(capsys, "check")
        assert code == EXIT_OK
        lines = out.strip().split("\n")
        assert len(lines) == 4
        assert all(line.startswith("ok ") for line in lines)
