import json

import numpy as np
import pytest
import yaml

from subjecttune.cli import main
from subjecttune.imaging import save_mask_png, save_png

from conftest import random_image


@pytest.fixture
def workdir(tmp_path):
    save_png(tmp_path / "subject.png", random_image((16, 16), seed=1))
    save_png(tmp_path / "scene.png", random_image((16, 16), seed=2))
    mask = np.zeros((16, 16), bool)
    mask[4:12, 4:12] = True
    save_mask_png(tmp_path / "mask.png", mask)
    return tmp_path


FAST_FLAGS = [
    "--max-iterations", "8",
    "--early-stop-window", "8",
    "--rank", "2",
    "--learning-rate", "0.02",
]


class TestGenerate:
    def test_toy_end_to_end(self, workdir, capsys):
        code = main(
            ["--workdir", str(workdir), "generate",
             "--subject", "subject.png", "--class", "dog",
             "--prompt", "a dog in paris",
             "--backbone", "toy", "--extractors", "stub",
             "--out", "run1", *FAST_FLAGS]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "config hash" in out
        session = workdir / "run1"
        assert (session / "adapter.npz").exists()
        assert (session / "losses.jsonl").exists()
        assert (session / "renders" / "a-dog-in-paris.png").exists()

    def test_missing_subject_is_user_error(self, workdir, capsys):
        code = main(["--workdir", str(workdir), "generate", "--backbone", "toy"])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err
        assert "--subject" in err

    def test_unknown_flag_is_user_error(self, workdir, capsys):
        code = main(["--workdir", str(workdir), "generate", "--frobnicate"])
        assert code == 1
        assert "usage" in capsys.readouterr().err


class TestDryRunAndPrecedence:
    def test_dry_run_prints_config_without_artifacts(self, workdir, capsys):
        code = main(
            ["--workdir", str(workdir), "generate",
             "--subject", "subject.png", "--backbone", "toy", "--dry-run"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["task"] == "generate"
        assert payload["effective_config"]["learning_rate"] == pytest.approx(3e-4)
        assert payload["effective_config"]["loss_weights"] == {
            "dino": 1.0, "ir": 1.0, "background": 10.0,
        }
        assert payload["effective_config"]["resolution"] == [512, 512]
        assert payload["config_hash"]
        assert not (workdir / "sessions").exists()

    def test_flags_override_file_override_defaults(self, workdir, capsys):
        config_file = workdir / "job.yaml"
        config_file.write_text(
            yaml.safe_dump(
                {
                    "subject": "subject.png",
                    "class_label": "dog",
                    "backbone": "toy",
                    "config": {"learning_rate": 0.01, "seed": 9},
                }
            )
        )
        code = main(
            ["--workdir", str(workdir), "generate",
             "--config", str(config_file), "--learning-rate", "0.05", "--dry-run"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["effective_config"]["learning_rate"] == pytest.approx(0.05)  # flag wins
        assert payload["effective_config"]["seed"] == 9  # file beats default
        assert payload["backbone"] == "toy"

    def test_identical_effective_config_identical_hash(self, workdir, capsys):
        args_a = ["--workdir", str(workdir), "generate", "--subject", "subject.png",
                  "--backbone", "toy", "--seed", "5", "--dry-run"]
        main(args_a)
        hash_a = json.loads(capsys.readouterr().out)["config_hash"]

        config_file = workdir / "seed5.yaml"
        config_file.write_text(yaml.safe_dump({"subject": "subject.png", "config": {"seed": 5}}))
        main(["--workdir", str(workdir), "generate", "--config", str(config_file),
              "--backbone", "toy", "--dry-run"])
        hash_b = json.loads(capsys.readouterr().out)["config_hash"]
        assert hash_a == hash_b


class TestEdit:
    def test_toy_edit_with_user_mask(self, workdir, capsys):
        code = main(
            ["--workdir", str(workdir), "edit",
             "--subject", "subject.png", "--input", "scene.png",
             "--class", "cat", "--mask-source", "user", "--mask", "mask.png",
             "--backbone", "toy", "--extractors", "stub",
             "--out", "edit1", *FAST_FLAGS]
        )
        assert code == 0
        session = workdir / "edit1"
        assert (session / "mask.png").exists()
        assert (session / "reconstruction.png").exists()
        assert (session / "renders" / "edited.png").exists()

    def test_edit_requires_input(self, workdir, capsys):
        code = main(
            ["--workdir", str(workdir), "edit", "--subject", "subject.png", "--backbone", "toy"]
        )
        assert code == 1


class TestSweep:
    def test_two_seed_sweep(self, workdir, capsys):
        code = main(
            ["--workdir", str(workdir), "sweep",
             "--subject", "subject.png", "--class", "dog",
             "--backbone", "toy", "--extractors", "stub",
             "--seeds", "1,2", "--out", "sweep1", *FAST_FLAGS]
        )
        assert code == 0
        assert (workdir / "sweep1" / "grid.png").exists()
        assert (workdir / "sweep1" / "seed_1" / "losses.jsonl").exists()
        assert (workdir / "sweep1" / "seed_2" / "losses.jsonl").exists()

    def test_bad_seed_list_is_user_error(self, workdir):
        assert main(["--workdir", str(workdir), "sweep", "--subject", "subject.png",
                     "--seeds", "one,two"]) == 1


class TestEval:
    def test_stub_manifest_smoke(self, workdir, capsys):
        manifest = workdir / "manifest.jsonl"
        entries = []
        for idx in range(2):
            out_path = workdir / f"gen_{idx}.png"
            save_png(out_path, random_image((16, 16), seed=50 + idx))
            entries.append(
                {
                    "sample_id": f"s{idx}",
                    "subject_path": str(workdir / "subject.png"),
                    "prompt": "a dog",
                    "output_path": str(out_path),
                }
            )
        manifest.write_text("\n".join(json.dumps(e) for e in entries) + "\n")
        code = main(
            ["--workdir", str(workdir), "eval", "--manifest", "manifest.jsonl",
             "--backends", "stub", "--output", "report"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "n_samples: 2" in out
        assert (workdir / "report" / "report.json").exists()

    def test_missing_manifest_is_runtime_error(self, workdir):
        code = main(["--workdir", str(workdir), "eval", "--manifest", "ghost.jsonl",
                     "--backends", "stub"])
        assert code == 2
