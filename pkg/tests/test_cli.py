import json
import subprocess
import sys

import pytest

from maisac.cli import build_parser, main
from maisac.experiments import COLUMNS, parse_csv


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text("n_tx: 3\nn_rx: 2\nk_dl: 2\nk_ul: 2\nn_clutter: 1\nn_paths: 2\n"
                 "max_ao_iters: 2\nmax_ao_iters_pso: 1\nn_particles: 2\npso_iters: 1\nn_random_init: 1\n")
    return p


class TestCli:
    def test_csv_to_file(self, small_config, tmp_path, capsys):
        out = tmp_path / "r.csv"
        code = main(["run", "--config", str(small_config), "--schemes", "FPA,AO-MA",
                     "--seeds", "2", "--out", str(out)])
        assert code == 0
        recs = parse_csv(out.read_text())
        assert [(r.seed, r.scheme) for r in recs] == [(0, "FPA"), (0, "AO-MA"), (1, "FPA"), (1, "AO-MA")]
        assert "FPA" in capsys.readouterr().err

    def test_json_sweep_to_stdout(self, small_config, capsys):
        code = main(["run", "--config", str(small_config), "--sweep", "weights_cs",
                     "--values", "0.2,0.3", "--schemes", "FPA", "--format", "json"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["columns"] == list(COLUMNS)
        assert [r["value"] for r in doc["records"]] == [0.2, 0.3]

    def test_trace_dir(self, small_config, tmp_path):
        d = tmp_path / "traces"
        assert main(["run", "--config", str(small_config), "--schemes", "AO-MA",
                     "--out", str(tmp_path / "o.csv"), "--trace-dir", str(d)]) == 0
        assert len(list(d.iterdir())) == 1

    def test_profile_sets_seed_count(self):
        args = build_parser().parse_args(["run", "--profile", "desk"])
        assert args.profile == "desk" and args.seeds is None

    def test_sweep_requires_values(self, capsys):
        assert main(["run", "--sweep", "p_dl", "--schemes", "FPA"]) == 2
        assert "--values" in capsys.readouterr().err

    def test_bad_config_key(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("bogus: 1\n")
        assert main(["run", "--config", str(p)]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_unknown_scheme(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run", "--schemes", "FPA,XYZ"])

    def test_failed_cell_exit_code(self, tmp_path, capsys):
        # a 4-element ULA (0.015 m) cannot fit the region: the FPA cell fails, the run still finishes
        p = tmp_path / "tight.yaml"
        p.write_text("region_max_x: 0.012\nregion_max_y: 0.012\nn_tx: 4\nn_rx: 1\n"
                     "k_dl: 1\nk_ul: 1\nn_clutter: 0\nn_paths: 2\nfpa_shape: ula\n")
        code = main(["run", "--config", str(p), "--schemes", "FPA", "--out", str(tmp_path / "o.csv")])
        err = capsys.readouterr().err
        assert code == 1 and "failed" in err

    def test_module_entry_point(self, small_config):
        proc = subprocess.run([sys.executable, "-m", "maisac.cli", "run", "--config", str(small_config),
                               "--schemes", "FPA"], capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert proc.stdout.startswith(",".join(COLUMNS))
