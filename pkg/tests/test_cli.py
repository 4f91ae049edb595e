import json
import math
from pathlib import Path

import numpy as np
import pytest

from semcomsim.cli import main
from semcomsim.serialize import load_dataset
from semcomsim.simpipeline import SimulationConfig, config_to_dict


@pytest.fixture
def desk_config_path(tmp_path) -> Path:
    cfg = SimulationConfig(num_images=8, master_seed=2)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    return path


def read_csv(path: Path) -> list[str]:
    return path.read_text().splitlines()


class TestSimulate:
    def test_writes_records_and_summary(self, desk_config_path, tmp_path):
        out = tmp_path / "run"
        code = main(["simulate", "--config", str(desk_config_path), "--out", str(out)])
        assert code == 0
        rows = read_csv(out / "records.csv")
        assert len(rows) == 1 + 8
        jsonl = read_csv(out / "records.jsonl")
        assert len(jsonl) == 8
        assert json.loads(jsonl[0])["image_index"] == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["summary"]["num_images"] == 8
        assert "config_sha256" in summary["provenance"]
        assert summary["provenance"]["master_seed"] == 2

    def test_odd_slot_len_exits_2_naming_field(self, desk_config_path, tmp_path, capsys):
        code = main([
            "simulate", "--config", str(desk_config_path),
            "--override", "slot_len=33", "--out", str(tmp_path / "x"),
        ])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["kind"] == "config"
        assert any("slot_len" in p for p in err["error"]["problems"])

    def test_unknown_override_rejected(self, desk_config_path, tmp_path, capsys):
        code = main([
            "simulate", "--config", str(desk_config_path),
            "--override", "chanel.snr_db=1", "--out", str(tmp_path / "x"),
        ])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert "chanel" in json.dumps(err)

    def test_noiseless_latent_only_linear_hits_psnr_cap(self, desk_config_path, tmp_path):
        out = tmp_path / "run"
        code = main([
            "simulate", "--config", str(desk_config_path),
            "--override", "channel.snr_db=inf",
            "--override", "thresholds.default=never",
            "--out", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["summary"]["mean_psnr_db"] == 100.0

    def test_seed_flag_overrides_master_seed(self, desk_config_path, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["simulate", "--config", str(desk_config_path), "--seed", "9", "--out", str(out_a)])
        main(["simulate", "--config", str(desk_config_path), "--seed", "9", "--out", str(out_b)])
        assert (out_a / "records.csv").read_bytes() == (out_b / "records.csv").read_bytes()

    def test_env_var_output_root(self, desk_config_path, tmp_path, monkeypatch):
        root = tmp_path / "envroot"
        monkeypatch.setenv("SEMCOMSIM_OUT", str(root))
        code = main(["simulate", "--config", str(desk_config_path)])
        assert code == 0
        assert (root / "records.csv").exists()

    def test_inputs_not_mutated(self, desk_config_path, tmp_path):
        before = desk_config_path.read_bytes()
        main(["simulate", "--config", str(desk_config_path), "--out", str(tmp_path / "r")])
        assert desk_config_path.read_bytes() == before


class TestInvert:
    def test_writes_trace_and_latent(self, tmp_path):
        cfg = SimulationConfig(
            n_slots=2, slot_len=8, height=6, width=6, num_images=2, master_seed=4
        )
        cfg.generator.kind = "mlp"
        cfg.generator.hidden = (12,)
        cfg.inversion.iterations = 40
        cfg.inversion.lambda2 = 0.0
        cfg.mode = "full_inversion"
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config_to_dict(cfg)))
        out = tmp_path / "inv"
        code = main(["invert", "--config", str(path), "--image-index", "1", "--out", str(out)])
        assert code == 0
        rows = read_csv(out / "loss_trace.csv")
        assert rows[0] == "iteration,loss"
        assert len(rows) == 1 + 40
        ds = load_dataset(out / "inverted_latent.json")
        assert ds.latents.shape == (1, 2, 8)
        metrics = json.loads((out / "inversion.json").read_text())
        assert metrics["final_loss"] <= metrics["initial_loss"]

    def test_bad_image_index(self, desk_config_path, tmp_path):
        code = main([
            "invert", "--config", str(desk_config_path),
            "--image-index", "99", "--out", str(tmp_path / "x"),
        ])
        assert code == 2


class TestGenDataset:
    def test_dataset_files_load_back(self, desk_config_path, tmp_path):
        out = tmp_path / "ds"
        code = main([
            "gen-dataset", "--config", str(desk_config_path),
            "--name", "clustered", "--images", "--out", str(out),
        ])
        assert code == 0
        ds = load_dataset(out / "clustered.json")
        assert ds.latents.shape == (8, 8, 32)
        assert ds.images.shape == (8, 3, 32, 32)

    def test_simulate_from_generated_dataset(self, desk_config_path, tmp_path):
        out = tmp_path / "ds"
        main(["gen-dataset", "--config", str(desk_config_path), "--out", str(out)])
        run_out = tmp_path / "run"
        code = main([
            "simulate", "--config", str(desk_config_path),
            "--override", "source.synthetic=null",
            "--override", f'source.dataset="{out / "dataset.json"}"',
            "--override", "num_images=4",
            "--out", str(run_out),
        ])
        assert code == 0
        assert len(read_csv(run_out / "records.csv")) == 1 + 4


class TestReport:
    def test_moving_average_matches_hand_computation(self, tmp_path):
        from semcomsim.accounting import TransmissionRecord

        rows = [TransmissionRecord.CSV_HEADER]
        for t, (b, p) in enumerate([(0.5, 10.0), (0.3, 11.0), (0.1, 12.0), (0.3, 13.0)]):
            rows.append(TransmissionRecord(
                image_index=t, n_s=1, payload_symbols=16, index_symbols=0.0,
                k_total=16.0, bcr=b, psnr_db=p, perceptual_distance=0.0,
            ).to_csv_row())
        records = tmp_path / "records.csv"
        records.write_text("\n".join(rows) + "\n")
        out = tmp_path / "report"
        code = main(["report", str(records), "--window", "2", "--out", str(out)])
        assert code == 0
        table = read_csv(out / "bcr_vs_index.csv")
        assert table[0] == "image_index,bcr_mean,bcr_moving_avg,psnr_mean"
        ma = [float(line.split(",")[2]) for line in table[1:]]
        assert ma == [0.5, 0.4, 0.2, 0.2]

    def test_window_one_is_raw_series(self, tmp_path, desk_config_path):
        run = tmp_path / "run"
        main(["simulate", "--config", str(desk_config_path), "--out", str(run)])
        out = tmp_path / "rep"
        main(["report", str(run / "records.csv"), "--window", "1", "--out", str(out)])
        table = read_csv(out / "bcr_vs_index.csv")
        for line in table[1:]:
            _, mean, ma, _ = line.split(",")
            assert mean == ma

    def test_mean_across_seed_files(self, tmp_path, desk_config_path):
        outs = []
        for seed in (1, 2):
            run = tmp_path / f"run{seed}"
            main(["simulate", "--config", str(desk_config_path), "--seed", str(seed),
                  "--out", str(run)])
            outs.append(run / "records.csv")
        rep = tmp_path / "rep"
        code = main(["report", *map(str, outs), "--out", str(rep)])
        assert code == 0
        table = read_csv(rep / "bcr_vs_index.csv")
        first_means = []
        for path in outs:
            row = read_csv(path)[1]
            first_means.append(float(row.split(",")[5]))
        assert float(table[1].split(",")[1]) == pytest.approx(np.mean(first_means), rel=1e-12)

    def test_schema_mismatch_names_column(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("image_index,n_s,payload,index_symbols,k,b,p,d,h\n")
        code = main(["report", str(bad), "--out", str(tmp_path / "rep")])
        assert code == 2
        err = capsys.readouterr().err
        assert "column" in err and "payload" in err


class TestSweep:
    def test_cells_and_rerun_bit_exact(self, desk_config_path, tmp_path):
        out = tmp_path / "sweep"
        code = main([
            "sweep", "--config", str(desk_config_path),
            "--axis", "channel.snr_db=0,20", "--seeds", "1,2",
            "--jobs", "1", "--out", str(out),
        ])
        assert code == 0
        index = json.loads((out / "index.json").read_text())
        assert len(index["cells"]) == 4
        assert all(c["status"] == "ok" for c in index["cells"])
        cell = index["cells"][0]
        rerun = tmp_path / "rerun"
        main([
            "simulate", "--config", str(desk_config_path),
            *sum((["--override", o] for o in cell["overrides"]), []),
            "--out", str(rerun),
        ])
        cell_csv = (out / cell["dir"] / "records.csv").read_bytes()
        assert (rerun / "records.csv").read_bytes() == cell_csv

    def test_parallel_jobs_match_serial(self, desk_config_path, tmp_path):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        argv_tail = ["--config", str(desk_config_path), "--seeds", "1,2"]
        main(["sweep", *argv_tail, "--jobs", "1", "--out", str(serial)])
        main(["sweep", *argv_tail, "--jobs", "2", "--out", str(parallel)])
        for cell in json.loads((serial / "index.json").read_text())["cells"]:
            a = (serial / cell["dir"] / "records.csv").read_bytes()
            b = (parallel / cell["dir"] / "records.csv").read_bytes()
            assert a == b

    def test_snr_monotonicity_and_psnr_report(self, desk_config_path, tmp_path):
        out = tmp_path / "sweep"
        main([
            "sweep", "--config", str(desk_config_path),
            "--axis", "channel.snr_db=0,20",
            "--axis", "thresholds.default=never",
            "--seeds", "1,2", "--jobs", "1", "--out", str(out),
        ])
        rep = tmp_path / "rep"
        code = main(["report", "--sweep-index", str(out / "index.json"), "--out", str(rep)])
        assert code == 0
        table = read_csv(rep / "psnr_vs_snr.csv")
        assert table[0] == "snr_db,mean_psnr_db,n_cells"
        by_snr = {float(r.split(",")[0]): float(r.split(",")[1]) for r in table[1:]}
        assert by_snr[20.0] > by_snr[0.0]

    def test_failed_cell_reported_nonzero_exit(self, desk_config_path, tmp_path):
        out = tmp_path / "sweep"
        code = main([
            "sweep", "--config", str(desk_config_path),
            "--axis", "num_images=2,4",
            "--axis", 'source.dataset="/nonexistent/path.json"',
            "--override", "source.synthetic=null",
            "--jobs", "1", "--out", str(out),
        ])
        assert code == 3
        index = json.loads((out / "index.json").read_text())
        assert all(c["status"] == "failed" for c in index["cells"])

    def test_sweep_without_axes_rejected(self, desk_config_path, tmp_path):
        code = main(["sweep", "--config", str(desk_config_path), "--out", str(tmp_path / "s")])
        assert code == 2
