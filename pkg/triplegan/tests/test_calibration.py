"""Tests for triplegan/scripts/benchmark.py.

The ``slow`` tests train the shipped configurations over five seeds and take
several minutes; run them with ``pytest -m slow``.
"""

from pathlib import Path

import pytest

from triplegan.core.settings import load_config
from triplegan.scripts.benchmark import (
    CalibrationReport,
    SeedResult,
    classifier_only,
    main,
    run_calibration,
    with_seed,
)

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def test_with_seed_forces_serial_run(tiny_config, tmp_path):
    seeded = with_seed(tiny_config, 3, tmp_path / "s3")
    assert seeded.data.seed == 3
    assert seeded.run.serial is True
    assert seeded.run.out_dir == str(tmp_path / "s3")
    assert seeded.game == tiny_config.game


def test_classifier_only_spends_every_iteration_pretraining(tiny_config):
    baseline = classifier_only(tiny_config)
    assert baseline.pretrain_iters == baseline.run.iters == 6
    assert baseline.model == tiny_config.model


def test_calibration_pairs_runs_per_seed(tiny_config, tmp_path):
    report = run_calibration(tiny_config, 2, tmp_path, n_per_class=8, name="tiny.ini")
    assert [s.seed for s in report.seeds] == [0, 1]
    assert report.config == "tiny.ini"
    assert report.sigma == 0.05
    assert report.mmd2_sample_size == 5
    assert all(s.mmd2_reference > 0.0 for s in report.seeds)
    assert (tmp_path / "triple_gan_1" / "last.tgan").exists()
    assert (tmp_path / "baseline_1" / "last.tgan").exists()
    assert all(0.0 <= s.baseline_error <= 1.0 for s in report.seeds)


def test_main_records_report_under_calibration_dir(mocker, monkeypatch, tmp_path, capsys):
    seed = SeedResult(
        seed=0,
        triple_gan_error=0.05,
        baseline_error=0.08,
        fidelity=0.95,
        mmd2_mean=0.001,
        mmd2_reference=0.0008,
        judge_reliable=True,
        class_faithful=True,
    )
    report = CalibrationReport(
        config="default.ini", regime="semi", labels_per_class=4, sigma=0.11, iters=3000, seeds=[seed]
    )
    run = mocker.patch("triplegan.scripts.benchmark.run_calibration", return_value=report)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr("sys.argv", ["benchmark", "--config", str(CONFIG_DIR / "default.ini"), "--seeds", "1"])
    main()
    assert run.call_args.kwargs["name"] == "default.ini"
    saved = CalibrationReport.model_validate_json((tmp_path / "calibration" / "default.json").read_text())
    assert saved == report
    assert "wrote calibration/default.json" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# Full-size runs
# ---------------------------------------------------------------------------


@pytest.fixture(name="semi_report", scope="module")
def semi_report_fixture(tmp_path_factory):
    return run_calibration(load_config(CONFIG_DIR / "default.ini"), 5, tmp_path_factory.mktemp("semi"))


@pytest.fixture(name="low_data_report", scope="module")
def low_data_report_fixture(tmp_path_factory):
    return run_calibration(load_config(CONFIG_DIR / "low_data.ini"), 5, tmp_path_factory.mktemp("low"))


@pytest.mark.slow
def test_triple_gan_beats_classifier_only(semi_report):
    assert semi_report.mean_triple_gan_error < semi_report.mean_baseline_error


@pytest.mark.slow
def test_generator_is_class_faithful(semi_report):
    for seed in semi_report.seeds:
        assert seed.judge_reliable
        assert seed.fidelity >= 0.90
        assert seed.mmd2_mean < 3 * seed.mmd2_reference


@pytest.mark.slow
def test_low_data_is_no_worse_than_supervised(low_data_report, semi_report):
    assert low_data_report.mean_triple_gan_error <= low_data_report.mean_baseline_error
    low_mmd = sum(s.mmd2_mean for s in low_data_report.seeds)
    semi_mmd = sum(s.mmd2_mean for s in semi_report.seeds)
    assert low_mmd > semi_mmd
