import pytest

from metaprior import checkpoint as ck
from metaprior import config
from metaprior.errors import CheckpointError, ConfigError
from metaprior.nn import init_weights, mlp_layout


@pytest.fixture
def checkpoint():
    return ck.Checkpoint(init_weights(mlp_layout(), 4), iteration=123, seed=4)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, checkpoint):
        path = tmp_path / "m.ckpt"
        ck.save(path, checkpoint)
        back = ck.load(path)
        assert back.theta.values.tobytes() == checkpoint.theta.values.tobytes()
        assert back.layout == checkpoint.layout
        assert (back.iteration, back.seed) == (123, 4)
        assert ck.encode(back) == path.read_bytes()

    def test_header(self, checkpoint):
        data = ck.encode(checkpoint)
        assert data[:4] == b"MPRI" and data[4] == ck.FORMAT_VERSION and data[5:6] == b"<"

    def test_flipped_byte_detected(self, checkpoint):
        data = bytearray(ck.encode(checkpoint))
        data[200] ^= 0xFF
        with pytest.raises(CheckpointError, match="checksum"):
            ck.decode(bytes(data))

    def test_truncated(self, checkpoint):
        with pytest.raises(CheckpointError):
            ck.decode(ck.encode(checkpoint)[:-100])
        with pytest.raises(CheckpointError):
            ck.decode(b"MP")

    def test_unknown_version(self, checkpoint):
        data = bytearray(ck.encode(checkpoint))
        data[4] = 99
        with pytest.raises(CheckpointError, match="version"):
            ck.decode(bytes(data))

    def test_bad_magic(self, checkpoint):
        with pytest.raises(CheckpointError, match="magic"):
            ck.decode(b"XXXX" + ck.encode(checkpoint)[4:])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            ck.load(tmp_path / "nope.ckpt")


class TestConfig:
    def test_defaults_follow_reported_hyperparameters(self):
        cfg = config.RunConfig()
        assert (cfg.inner_step, cfg.inner_batch, cfg.outer_step, cfg.outer_iters) == (0.02, 5, 0.1, 10_000)
        assert (cfg.meta_batch, cfg.model_size, cfg.eval_iterations, cfg.eval_batch) == (10, 64, 32, 10)
        assert (cfg.sample_radius, cfg.mc_samples, cfg.k_max) == (4.0, 100_000, 10)

    def test_parse_file_and_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nouter_iters = 2_000\nseed = 3  # trailing\nacquisition = pi\n\n")
        cfg = config.load(path, environ={})
        assert (cfg.outer_iters, cfg.seed, cfg.acquisition) == (2000, 3, "probability_of_improvement")
        assert config.load(path, environ={"METAPRIOR_SEED": "9"}).seed == 9
        assert config.load(path, {"seed": "11"}, environ={"METAPRIOR_SEED": "9"}).seed == 11

    def test_kernel_noise_includes_observation_noise(self):
        cfg = config.RunConfig()
        assert cfg.kernel().noise_var == pytest.approx(cfg.gp_noise_var + cfg.noise_var)

    @pytest.mark.parametrize("text", ["bogus = 1\n", "outer_iters = many\n", "just words\n",
                                      "std_min = 3\n", "acquisition = ucb\n"])
    def test_errors(self, tmp_path, text):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError):
            config.load(path, environ={})

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.cfg"):
            config.load(tmp_path / "missing.cfg")

    def test_dumps_round_trips(self, tmp_path):
        cfg = config.load(None, {"outer_iters": 7, "std_max": 1.5}, environ={})
        path = tmp_path / "dump.cfg"
        path.write_text(config.dumps(cfg))
        assert config.load(path, environ={}) == cfg

    def test_echo_omits_runtime_keys(self):
        echo = config.RunConfig().echo()
        assert "workers" not in echo and "checkpoint_out" not in echo
        assert echo["seed"] == 0
