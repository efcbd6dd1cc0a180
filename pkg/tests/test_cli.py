import json

import numpy as np
import pytest

from evopix.cli import cli, resolve_dataset
from evopix.data import load_dataset
from evopix.perturb import load_perturbation

SYNTH = "synth:seed=0,classes=2,per_class=30,shape=1x8x8"
SYNTH_TEST = SYNTH + ",split=test"


def canonical(path):
    """File content with wall-clock bookkeeping stripped, for replay checks."""
    text = path.read_text()
    if path.name.endswith(".jsonl") or text.startswith("{"):
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                records.append(line)
                continue
            if isinstance(rec, dict):
                rec.pop("wall_ms", None)
            records.append(json.dumps(rec, sort_keys=True))
        return "\n".join(records)
    return text


class TestResolveDataset:
    def test_synth_spec(self):
        ds = resolve_dataset(SYNTH)
        assert len(ds) == 60
        assert ds.image_shape == (1, 8, 8)
        te = resolve_dataset(SYNTH_TEST)
        assert not np.array_equal(ds.images[:1], te.images[:1])

    def test_unknown_spec_fails_validation(self, capsys):
        assert cli(["divergence", "--dataset", "nosuch.fmt",
                    "--corrupted", SYNTH, "--out", "/tmp/x"]) == 1
        assert "error:" in capsys.readouterr().err


class TestBaselineAndApply:
    def test_column_baseline_diff_confined_to_column_zero(self, tmp_path):
        pert = tmp_path / "col.json"
        assert cli(["baseline", "--mode", "column", "--dataset", SYNTH,
                    "--np", "1", "--out", str(pert)]) == 0
        out = tmp_path / "corrupted.npz"
        assert cli(["apply", "--dataset", SYNTH, "--perturbation", str(pert),
                    "--out", str(out)]) == 0
        clean = resolve_dataset(SYNTH)
        corrupted = load_dataset(out)
        diff = corrupted.images != clean.images
        changed = np.argwhere(diff)
        assert len(changed) > 0
        assert set(changed[:, 3]) == {0}  # only column 0 differs

    def test_uniform_baseline_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert cli(["baseline", "--mode", "uniform", "--dataset", SYNTH,
                        "--np", "2", "--seed", "5", "--out", str(path)]) == 0
        assert a.read_text() == b.read_text()

    def test_apply_output_reloads_to_in_memory_result(self, tmp_path):
        from evopix.perturb import apply_perturbation
        pert = tmp_path / "p.json"
        cli(["baseline", "--mode", "uniform", "--dataset", SYNTH,
             "--np", "1", "--seed", "1", "--out", str(pert)])
        out = tmp_path / "c.npz"
        cli(["apply", "--dataset", SYNTH, "--perturbation", str(pert),
             "--out", str(out)])
        in_memory = apply_perturbation(resolve_dataset(SYNTH),
                                       load_perturbation(pert))
        on_disk = load_dataset(out)
        assert np.array_equal(on_disk.images, in_memory.images)
        assert np.array_equal(on_disk.labels, in_memory.labels)


class TestDivergenceCommand:
    def test_identical_datasets_chance_level(self, tmp_path, capsys):
        out = tmp_path / "div.json"
        code = cli(["divergence", "--dataset", SYNTH, "--corrupted", SYNTH,
                    "--out", str(out)])
        assert code == 0
        record = json.loads(out.read_text())
        assert -0.4 <= record["d_A"] <= 0.4
        printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert printed == record


class TestTrainAndSurface:
    def test_train_writes_checkpoint_history_manifest(self, tmp_path):
        ckpt = tmp_path / "net.json"
        code = cli(["train", "--dataset", SYNTH, "--optimizer", "sgd",
                    "--epochs", "2", "--batch", "16", "--seed", "0",
                    "--arch", "4FC-2S", "--out", str(ckpt)])
        assert code == 0
        assert ckpt.exists()
        assert (tmp_path / "net.json.history.jsonl").exists()
        manifest = json.loads((tmp_path / "net.json.manifest.json").read_text())
        assert manifest["command"] == "train"
        assert "--arch" in manifest["argv"]

    def test_surface_endpoints(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cli(["train", "--dataset", SYNTH, "--optimizer", "sgd", "--epochs", "2",
             "--batch", "16", "--seed", "0", "--arch", "4FC-2S", "--out", str(a)])
        cli(["train", "--dataset", SYNTH, "--optimizer", "adam", "--epochs", "2",
             "--batch", "16", "--seed", "0", "--arch", "4FC-2S", "--out", str(b)])
        table = tmp_path / "surface.tsv"
        code = cli(["surface", "--ckpt-a", str(a), "--ckpt-b", str(b),
                    "--dataset", SYNTH, "--eval-dataset", SYNTH_TEST,
                    "--alphas", "5", "--out", str(table)])
        assert code == 0
        lines = table.read_text().strip().splitlines()
        assert len(lines) == 6
        alphas = [float(l.split("\t")[0]) for l in lines[1:]]
        assert alphas[0] == 0.0 and alphas[-1] == 1.0


class TestEvolveCommand:
    def test_single_generation_smoke(self, tmp_path):
        pert = tmp_path / "best.json"
        code = cli(["evolve", "--dataset", SYNTH, "--np", "1", "--pop", "4",
                    "--gens", "1", "--epochs", "2", "--batch", "16",
                    "--subset", "40", "--seed", "0", "--arch", "2S",
                    "--out", str(pert)])
        assert code == 0
        # perturbation file round-trips through apply
        out = tmp_path / "c.npz"
        assert cli(["apply", "--dataset", SYNTH, "--perturbation", str(pert),
                    "--out", str(out)]) == 0
        log = tmp_path / "best.json.log.jsonl"
        assert len(log.read_text().strip().splitlines()) == 1


class TestReplay:
    def test_replay_reproduces_outputs_bit_identically(self, tmp_path):
        first = tmp_path / "run1.json"
        args = ["evolve", "--dataset", SYNTH, "--np", "1", "--pop", "4",
                "--gens", "2", "--epochs", "2", "--batch", "16",
                "--subset", "40", "--seed", "3", "--arch", "2S",
                "--out", str(first)]
        assert cli(args) == 0
        manifest = tmp_path / "run1.json.manifest.json"
        second = tmp_path / "run2.json"
        assert cli(["replay", str(manifest), "--out", str(second)]) == 0
        assert first.read_text() == second.read_text()
        assert canonical(tmp_path / "run1.json.log.jsonl") == \
            canonical(tmp_path / "run2.json.log.jsonl")

    def test_replay_train_checkpoint_bit_identical(self, tmp_path):
        a = tmp_path / "a.json"
        assert cli(["train", "--dataset", SYNTH, "--optimizer", "adam",
                    "--epochs", "2", "--batch", "16", "--seed", "7",
                    "--arch", "4FC-2S", "--out", str(a)]) == 0
        b = tmp_path / "b.json"
        assert cli(["replay", str(a) + ".manifest.json", "--out", str(b)]) == 0
        assert a.read_text() == b.read_text()
        assert canonical(tmp_path / "a.json.history.jsonl") == \
            canonical(tmp_path / "b.json.history.jsonl")


class TestExitCodes:
    def test_missing_required_flag(self, capsys):
        assert cli(["train", "--dataset", SYNTH]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert cli(["frobnicate"]) == 1

    def test_missing_file(self, capsys, tmp_path):
        assert cli(["apply", "--dataset", SYNTH,
                    "--perturbation", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "x.npz")]) == 1
