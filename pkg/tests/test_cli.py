import numpy as np
import pytest

from szlstm.cli import dispatch, parse_variant, read_config_file, UsageError
from szlstm.training import load_checkpoint


def run(argv):
    return dispatch(argv)


class TestParsing:
    def test_variants(self):
        assert parse_variant("standard") == ("standard", None)
        assert parse_variant("adaptive") == ("adaptive", None)
        assert parse_variant("fixed:0.3") == ("fixed_zoneout", 0.3)

    def test_bad_variant(self):
        with pytest.raises(UsageError):
            parse_variant("fixed:two")
        with pytest.raises(UsageError):
            parse_variant("zoned")

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seq_len = 20\nhidden=32  # cells\n\nvariant = fixed:0.25\n")
        values = read_config_file(str(cfg))
        assert values == {"seq_len": 20, "hidden": 32, "variant": "fixed:0.25"}

    def test_config_file_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("hidden_units = 3\n")
        with pytest.raises(UsageError, match="hidden_units"):
            read_config_file(str(cfg))


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert run(["gradcheck", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_corpus_is_io_error(self, tmp_path, capsys):
        code = run(["train", str(tmp_path / "absent"), "--steps", "1",
                    "--run-dir", str(tmp_path)])
        assert code == 3

    def test_failed_gradcheck_is_numerical_failure(self, capsys):
        assert run(["gradcheck", "--threshold", "1e-12"]) == 2


class TestGradcheckCommand:
    def test_passes_and_prints_table(self, capsys):
        assert run(["gradcheck"]) == 0
        out = capsys.readouterr().out
        for variant in ("standard", "sf", "fixed_zoneout", "adaptive"):
            assert f"variant={variant}" in out
        assert "block\tmax_rel_err" in out


class TestTrainEvalCommands:
    def test_zero_step_train_writes_init_checkpoint(self, corpus_path, corpus, tmp_path, capsys):
        code = run(["train", corpus_path, "--steps", "0", "--hidden", "12",
                    "--batch", "4", "--seq-len", "10", "--chunk-len", "50",
                    "--run-dir", str(tmp_path), "--run-id", "init"])
        assert code == 0
        ckpt = load_checkpoint(str(tmp_path / "init.ckpt"))
        assert ckpt.step == 0
        log = (tmp_path / "init.log").read_text().splitlines()
        step0 = log[1].split("\t")
        uniform = np.log2(corpus.vocab_size)
        assert abs(float(step0[2]) - uniform) / uniform < 0.05

    def test_eval_is_deterministic(self, corpus_path, tmp_path, capsys):
        assert run(["train", corpus_path, "--steps", "5", "--hidden", "12",
                    "--batch", "4", "--seq-len", "10", "--chunk-len", "50",
                    "--run-dir", str(tmp_path), "--run-id", "m"]) == 0
        capsys.readouterr()
        ckpt = str(tmp_path / "m.ckpt")
        assert run(["eval", ckpt, corpus_path, "--split", "valid", "--lanes", "4"]) == 0
        first = capsys.readouterr().out
        assert run(["eval", ckpt, corpus_path, "--split", "valid", "--lanes", "4"]) == 0
        assert capsys.readouterr().out == first
        assert first.startswith("valid_bpc\t")

    def test_reduction_chain_end_to_end(self, corpus_path, tmp_path, capsys):
        common = ["--steps", "10", "--hidden", "12", "--batch", "4",
                  "--seq-len", "10", "--chunk-len", "50", "--seed", "5",
                  "--run-dir", str(tmp_path)]
        assert run(["train", corpus_path, "--variant", "adaptive", "--tau", "1.0",
                    "--run-id", "a1", *common]) == 0
        assert run(["train", corpus_path, "--variant", "sf",
                    "--run-id", "sf", *common]) == 0
        capsys.readouterr()
        assert run(["eval", str(tmp_path / "a1.ckpt"), corpus_path]) == 0
        bpc_adaptive = capsys.readouterr().out
        assert run(["eval", str(tmp_path / "sf.ckpt"), corpus_path]) == 0
        bpc_sf = capsys.readouterr().out
        assert bpc_adaptive == bpc_sf

    def test_config_file_with_flag_override(self, corpus_path, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("hidden = 12\nbatch_size = 4\nseq_len = 10\n"
                       "chunk_len = 50\nsteps = 999\n")
        assert run(["train", corpus_path, "--config", str(cfg), "--steps", "2",
                    "--run-dir", str(tmp_path), "--run-id", "cfg"]) == 0
        assert load_checkpoint(str(tmp_path / "cfg.ckpt")).step == 2

    def test_invalid_flag_combination_names_field(self, corpus_path, tmp_path, capsys):
        code = run(["train", corpus_path, "--seq-len", "7", "--chunk-len", "50",
                    "--run-dir", str(tmp_path)])
        assert code == 1
        assert "chunk_len" in capsys.readouterr().err


class TestTraceCommand:
    def test_writes_both_csvs(self, corpus_path, tmp_path, capsys):
        assert run(["train", corpus_path, "--steps", "2", "--hidden", "12",
                    "--batch", "4", "--seq-len", "10", "--chunk-len", "50",
                    "--run-dir", str(tmp_path), "--run-id", "t"]) == 0
        code = run(["trace", str(tmp_path / "t.ckpt"), corpus_path,
                    "--window", "20", "--out-dir", str(tmp_path),
                    "--run-id", "demo"])
        assert code == 0
        gates = (tmp_path / "demo_gates.csv").read_text().splitlines()
        assert gates[0] == "t,cell,i,o,f,Z"
        assert len(gates) == 1 + 20 * 12
        assert (tmp_path / "demo_cellchange.csv").exists()


class TestSampleCommand:
    @pytest.fixture()
    def checkpoint(self, corpus_path, tmp_path):
        assert run(["train", corpus_path, "--steps", "2", "--hidden", "12",
                    "--batch", "4", "--seq-len", "10", "--chunk-len", "50",
                    "--run-dir", str(tmp_path), "--run-id", "s"]) == 0
        return str(tmp_path / "s.ckpt")

    def test_generates_text(self, checkpoint, capsys):
        capsys.readouterr()
        assert run(["sample", checkpoint, "--prompt", "the ", "--length", "40",
                    "--seed", "1"]) == 0
        out = capsys.readouterr().out.rstrip("\n")
        assert out.startswith("the ")
        assert len(out) >= 40

    def test_sampling_is_seed_deterministic(self, checkpoint, capsys):
        run(["sample", checkpoint, "--prompt", "data", "--length", "30", "--seed", "2"])
        a = capsys.readouterr().out
        run(["sample", checkpoint, "--prompt", "data", "--length", "30", "--seed", "2"])
        assert capsys.readouterr().out == a

    def test_unknown_prompt_byte_rejected(self, checkpoint, capsys):
        assert run(["sample", checkpoint, "--prompt", "q!!"]) == 1
        assert "vocabulary" in capsys.readouterr().err

    def test_temperature_must_be_positive(self, checkpoint, capsys):
        assert run(["sample", checkpoint, "--prompt", "the ",
                    "--temperature", "0"]) == 1
