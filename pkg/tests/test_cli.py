import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from neuroswarm import pipeline as pl
from neuroswarm.cli import main

DADA = [(0.0, 15.0, "Disperse"), (15.0, 30.0, "Aggregate"),
        (30.0, 45.0, "Disperse"), (45.0, 60.0, "Aggregate")]
DADA_FLAG = "0-15:Disperse,15-30:Aggregate,30-45:Disperse,45-60:Aggregate"


def write_dada_spec(path: Path) -> str:
    spec = pl.SynthSpecModel(
        duration_s=60.0,
        segments=[pl.MetricSegmentModel(
            start_s=s, end_s=e, mean=pl.THOUGHT_METRIC_MEANS[lab], sigma=0.05)
            for s, e, lab in DADA],
        noise_uv=10.0,
    )
    path.write_text(spec.model_dump_json())
    return str(path)


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    spec = write_dada_spec(tmp / "spec.json")
    out = tmp / "model.txt"
    rc = main(["train", "--synth-spec", spec, "--schedule", DADA_FLAG,
               "--out", str(out), "--seed", "7"])
    assert rc == 0
    return str(out)


class TestTrainCommand:
    def test_train_writes_model_and_prints_agreement(self, tmp_path, capsys):
        spec = write_dada_spec(tmp_path / "spec.json")
        out = tmp_path / "model.txt"
        rc = main(["train", "--synth-spec", spec, "--schedule", DADA_FLAG,
                   "--out", str(out), "--seed", "7"])
        captured = capsys.readouterr()
        assert rc == 0
        assert out.exists()
        assert "agreement:" in captured.out

    def test_missing_trace_usage_error(self, capsys):
        rc = main(["train", "--schedule", DADA_FLAG, "--out", "x.txt"])
        assert rc == 2

    def test_seed_repeatability_identical_hash(self, tmp_path):
        spec = write_dada_spec(tmp_path / "spec.json")
        hashes = []
        for name in ("m1.txt", "m2.txt"):
            out = tmp_path / name
            rc = main(["train", "--synth-spec", spec, "--schedule", DADA_FLAG,
                       "--out", str(out), "--seed", "11"])
            assert rc == 0
            hashes.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert hashes[0] == hashes[1]

    def test_nonexistent_trace_io_error(self, tmp_path, capsys):
        rc = main(["train", "--trace", str(tmp_path / "missing.trace"),
                   "--schedule", DADA_FLAG, "--out", str(tmp_path / "m.txt")])
        assert rc == 4


class TestSynthCommand:
    def test_determinism_by_seed(self, tmp_path):
        spec = write_dada_spec(tmp_path / "spec.json")
        digests = []
        for name in ("t1", "t2"):
            out = tmp_path / name
            rc = main(["synth", "--spec", spec, "--out", str(out),
                       "--seed", "5"])
            assert rc == 0
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_rectangle_mission_spec(self, tmp_path, capsys):
        out = tmp_path / "mission.trace"
        spec_out = tmp_path / "mission-spec.json"
        rc = main(["synth", "--rectangle-mission", "10", "--out", str(out),
                   "--seed", "3", "--spec-out", str(spec_out)])
        assert rc == 0
        spec = json.loads(spec_out.read_text())
        assert len(spec["saccades"]) == 4
        assert [s["direction"] for s in spec["saccades"]] == \
            ["Right", "Down", "Left", "Up"]


class TestRunCommand:
    def test_single_robot_silent_trace_stationary(self, tmp_path, model_file,
                                                  capsys):
        spec = pl.SynthSpecModel(
            duration_s=5.0,
            segments=[pl.MetricSegmentModel(
                start_s=0.0, end_s=5.0,
                mean=pl.THOUGHT_METRIC_MEANS["Disperse"], sigma=0.02)],
        )
        spec_path = tmp_path / "quiet.json"
        spec_path.write_text(spec.model_dump_json())
        record = tmp_path / "rec.jsonl"
        rc = main(["run", "--synth-spec", str(spec_path), "--model", model_file,
                   "--robots", "1", "--record", str(record), "--seed", "2"])
        assert rc == 0
        _, frames = pl.read_frames(record)
        first, last = frames[0], frames[-1]
        assert np.allclose(first.centroid, last.centroid)

    def test_batch_determinism_hashes(self, tmp_path, model_file, capsys):
        spec = write_dada_spec(tmp_path / "spec.json")
        digests = []
        for name in ("r1.jsonl", "r2.jsonl"):
            record = tmp_path / name
            rc = main(["run", "--synth-spec", spec, "--model", model_file,
                       "--robots", "4", "--record", str(record),
                       "--speed", "0", "--seed", "2"])
            assert rc == 0
            digests.append(hashlib.sha256(record.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_missing_model_validation_error(self, tmp_path, capsys):
        spec = write_dada_spec(tmp_path / "spec.json")
        rc = main(["run", "--synth-spec", spec])
        assert rc == 2

    def test_config_file_round_trip(self, tmp_path, model_file):
        spec = pl.SynthSpecModel(
            duration_s=5.0,
            segments=[pl.MetricSegmentModel(
                start_s=0.0, end_s=5.0,
                mean=pl.THOUGHT_METRIC_MEANS["Aggregate"], sigma=0.02)],
        )
        cfg = pl.SessionConfig(mode="replay", synth_spec=spec,
                               model_path=model_file, robots=2,
                               initial_spacing=3.0, seed=9,
                               record_path=str(tmp_path / "rec.jsonl"))
        cfg_path = tmp_path / "session.json"
        pl.save_config(cfg, cfg_path)
        rc = main(["run", "--config", str(cfg_path)])
        assert rc == 0
        assert (tmp_path / "rec.jsonl").exists()


class TestInspectCommand:
    @pytest.fixture()
    def drive_recording(self, tmp_path, model_file):
        spec = pl.SynthSpecModel(
            duration_s=10.0,
            saccades=[pl.SaccadeEventModel(t_s=6.0, direction="Right",
                                           amplitude_uv=150.0)],
            segments=[pl.MetricSegmentModel(
                start_s=0.0, end_s=10.0,
                mean=pl.THOUGHT_METRIC_MEANS["Disperse"], sigma=0.02)],
        )
        spec_path = tmp_path / "drive.json"
        spec_path.write_text(spec.model_dump_json())
        record = tmp_path / "drive.jsonl"
        rc = main(["run", "--synth-spec", str(spec_path), "--model", model_file,
                   "--robots", "1", "--record", str(record), "--seed", "2"])
        assert rc == 0
        return record

    def test_centroid_table_straight_line(self, drive_recording, capsys):
        rc = main(["inspect", "--recording", str(drive_recording),
                   "--what", "centroid"])
        out = capsys.readouterr().out.strip().splitlines()
        assert rc == 0
        assert out[0].split() == ["t_ms", "centroid_x", "centroid_y"]
        rows = [line.split() for line in out[1:]]
        ys = {row[2] for row in rows}
        assert ys == {"0.000000"}  # pure horizontal drive
        xs = [float(row[1]) for row in rows]
        assert xs[-1] > xs[0]

    def test_nn_dist_plateaus_across_gain_switch(self, tmp_path, model_file,
                                                 capsys):
        segments = [
            pl.MetricSegmentModel(start_s=0.0, end_s=30.0,
                                  mean=pl.THOUGHT_METRIC_MEANS["Aggregate"],
                                  sigma=0.02),
            pl.MetricSegmentModel(start_s=30.0, end_s=60.0,
                                  mean=pl.THOUGHT_METRIC_MEANS["Disperse"],
                                  sigma=0.02),
        ]
        spec = pl.SynthSpecModel(duration_s=60.0, segments=segments)
        spec_path = tmp_path / "switch.json"
        spec_path.write_text(spec.model_dump_json())
        record = tmp_path / "switch.jsonl"
        rc = main(["run", "--synth-spec", str(spec_path), "--model", model_file,
                   "--robots", "2", "--gains-aggregate", "4,8",
                   "--gains-disperse", "2,8", "--record", str(record),
                   "--seed", "2"])
        assert rc == 0
        capsys.readouterr()  # drain the run command's output
        rc = main(["inspect", "--recording", str(record), "--what", "nn-dist"])
        out = capsys.readouterr().out.strip().splitlines()
        rows = [(int(r.split()[0]), float(r.split()[1])) for r in out[1:]]
        plateau_1 = np.mean([v for t, v in rows if 20000 < t <= 30000])
        plateau_2 = np.mean([v for t, v in rows if 50000 < t <= 60000])
        assert plateau_1 == pytest.approx(2.1, rel=0.02)  # delta(4, 8)
        assert plateau_2 == pytest.approx(4.1, rel=0.02)  # delta(2, 8)

    def test_thought_timeline(self, drive_recording, capsys):
        rc = main(["inspect", "--recording", str(drive_recording),
                   "--what", "thought-timeline"])
        out = capsys.readouterr().out.strip().splitlines()
        assert rc == 0
        assert len(out) > 10


class TestUsage:
    def test_unknown_flag_exit_2(self, capsys):
        assert main(["synth", "--does-not-exist", "x"]) == 2

    def test_unknown_subcommand_exit_2(self, capsys):
        assert main(["transmogrify"]) == 2

    def test_help_lists_subcommands(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for name in ("train", "run", "synth", "inspect", "serve"):
            assert name in out

    def test_subcommand_help_lists_flags(self, capsys):
        assert main(["run", "--help"]) == 0
        out = capsys.readouterr().out
        for flag in ("--trace", "--model", "--robots", "--record", "--speed",
                     "--serve-port"):
            assert flag in out
