import json

import pytest

from dercomplex.cli import ConfigError, RunConfig, emit_config, main, parse_config, run, summary_text


def test_minimal_config_fills_defaults():
    cfg = parse_config("domain = cube\nexperiment = complex-check\n")
    assert cfg.resolution == [8]
    assert cfg.partitions == ["all-T", "all-N", "T:x-"]
    assert cfg.seed == 0


def test_torus_harmonic_config():
    cfg = parse_config("domain = torus  # solid torus\nexperiment = harmonic\n")
    assert cfg.domain == "torus"
    assert cfg.resolution == [1, 2]


def test_json_config():
    cfg = parse_config(json.dumps({"domain": "cavity", "partitions": ["T:x-,y+"], "n_list": [1, 2]}))
    assert cfg.partitions == ["T:x-,y+"]
    assert cfg.n_list == [1, 2]


@pytest.mark.parametrize("text,needle", [
    ("domain = cube\npartitions = X\n", "'partitions'"),
    ("domain = cube\ncolour = red\n", "line 2"),
    ("experiment = harmonic\n", "missing domain"),
    ("domain = cube\nresolution = 4, x\n", "'resolution'"),
    ("domain = cube\nresolution 4\n", "line 2"),
    ("domain = sphere\n", "'domain'"),
    ("domain = cube\nfamilies = F1, F9\n", "'families'"),
    ('{"domain": "cube", "seed": 1.5}', "'seed'"),
    ('{"domain": "cube",', "malformed JSON"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_round_trip():
    cfg = parse_config("domain = cavity\npartitions = all-T, T:x-,z+\nn_list = 1, 4\ndirection = 1, 0.5, 0\n"
                       "quadrature = yes\neig_tol = 1e-11\n")
    assert cfg.partitions == ["all-T", "T:x-,z+"]
    assert parse_config(emit_config(cfg)) == cfg
    assert parse_config(emit_config(RunConfig())) == RunConfig()


def test_complex_check_run(tmp_path):
    cfg = parse_config(f"domain = cube\nresolution = 2\npartitions = all-T\nexperiment = complex-check\n"
                       f"ibp_trials = 5\noutput = {tmp_path}\n")
    code, report = run(cfg)
    assert code == 0
    assert report["status"] == "pass"
    assert report["schema_version"]
    data = json.loads((tmp_path / "report.json").read_text())
    assert data == report
    assert data["experiments"]["complex-check"][0]["complex"] == {"curl_grad": 0.0, "div_curl": 0.0}
    assert (tmp_path / "complex_check.csv").exists()


def test_summary_is_a_view_of_the_report(tmp_path):
    cfg = parse_config(f"domain = torus\nresolution = 1\npartitions = all-N\nexperiment = harmonic\n"
                       f"split_trials = 2\noutput = {tmp_path}\n")
    code, report = run(cfg)
    assert code == 0
    assert report["experiments"]["harmonic"][0]["dimension"] == 1
    text = (tmp_path / "summary.txt").read_text()
    assert text == summary_text(report)
    for check in report["checks"]:
        assert repr(check["value"]) in text
    assert (tmp_path / "harmonic_torus_r1_all_N.csv").exists()


def test_deterministic_report(tmp_path):
    texts = []
    for i in range(2):
        cfg = parse_config(f"domain = cube\nresolution = 3\nexperiment = constants\nestimate_trials = 10\n"
                           f"output = {tmp_path / str(i)}\n")
        run(cfg, timestamp="fixed")
        texts.append((tmp_path / str(i) / "report.json").read_text().replace(str(tmp_path / str(i)), "OUT"))
    assert texts[0] == texts[1]


@pytest.mark.filterwarnings("ignore:.*rank gap")
def test_failing_check_sets_exit_code(tmp_path):
    # the harmonic dimension on the torus is 1 under all-N; a loose rank tolerance admits extra modes
    cfg = parse_config(f"domain = torus\nresolution = 1\npartitions = all-N\nexperiment = harmonic\n"
                       f"split_trials = 1\ntol_rank = 0.5\noutput = {tmp_path}\n")
    code, report = run(cfg)
    assert code == 1
    assert "harmonic/torus/r1/all-N/dimension" in report["failing"]


def test_cell_list_domain(tmp_path):
    cells = tmp_path / "ell.txt"
    cells.write_text("0 0 0\n1 0 0\n1 1 0\n")
    cfg = parse_config(f"cells = {cells}\nresolution = 2\npartitions = all-N\nexperiment = complex-check\n"
                       f"ibp_trials = 3\noutput = {tmp_path / 'out'}\n")
    code, report = run(cfg)
    assert code == 0
    assert report["experiments"]["complex-check"][0]["cells"] == 3 * 8


def test_main_exit_codes(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("domain = cube\nresolution = 2\npartitions = all-N\nibp_trials = 3\n")
    assert main(["check", "--config", str(conf), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["seed"] == 3
    assert report["config"]["experiment"] == "complex-check"
    assert main(["check", "--config", str(tmp_path / "missing.conf")]) == 2
    conf.write_text("domain = cube\npartitions = X\n")
    assert main(["check", "--config", str(conf)]) == 2
    assert "partitions" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    conf = tmp_path / "run.conf"
    conf.write_text("domain = cube\nresolution = 1\n")
    assert main(["check", "--config", str(conf), "--out", str(blocker / "sub")]) == 2


def test_example_config_documents_defaults():
    from pathlib import Path

    text = (Path(__file__).parents[1] / "configs" / "example.conf").read_text()
    assert parse_config(text) == RunConfig()


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "n_list = 1, 2, 4, 8, 16, 32" in out
    assert "{all,check,constants,divcurl,harmonic}" in out


def test_non_finite_values_are_strings(tmp_path):
    # a single n gives no slope to fit
    cfg = parse_config(f"domain = cube\nexperiment = divcurl\nfamilies = F2\nn_list = 2\ngrids = 12\n"
                       f"divcurl_partitions = all-N\ndual_resolution = 16\noutput = {tmp_path}\n")
    code, report = run(cfg)
    alt = report["experiments"]["divcurl"]["alternative"][0]
    assert alt["slopes"]["defect"] == "nan"
    json.loads((tmp_path / "report.json").read_text())
