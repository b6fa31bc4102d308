import textwrap

import pytest

from blocs import ConfigError, ExperimentConfig, load_config, parse_list

def write_config(tmp_path, text: str) -> str:
    path = tmp_path / "blocs.conf"
    path.write_text(textwrap.dedent(text))
    return str(path)

def test_defaults() -> None:
    cfg = load_config()

    assert cfg.method == "cst"
    assert cfg.sides == [32]
    assert cfg.subrates == [0.1, 0.2, 0.3, 0.4]
    assert cfg.refine_mode == "cst"
    assert cfg.tv.beta == 128.0 and cfg.tv.mu == 32.0
    assert cfg.patches.patch_side == 6 and cfg.patches.group_size == 60
    assert cfg.refine.mu1 == 0.0025
    assert cfg.dcvs.nonkey.mu3 == 0.055

def test_full_file(tmp_path) -> None:
    path = write_config(tmp_path, """
        [general]
        method = MBTV-NLLM
        block_side = 16
        block_sides = 8, 16
        subrates = 0.2, 0.5
        seed = 7
        out = results
        workers = 2
        save_images = no
        record_runtime = no

        [inputs]
        images/Leaves.pgm
        images/monarch.pgm

        [tv]
        beta = 64
        max_outer = 10
        use_nllm = no

        [nlm]
        patch_side = 5

        [patches]
        group_size = 30
        tau_hard = 12.5

        [refine]
        mu1 = 0.01

        [dcvs]
        gop_size = 4
        mu3 = 0.1
        search_radius = 3
    """)

    cfg = load_config(path)

    assert cfg.method == "mbtv-nllm"
    assert cfg.refine_mode is None
    assert cfg.sides == [8, 16]
    assert cfg.subrates == [0.2, 0.5]
    assert cfg.seed == 7
    assert cfg.out == "results"
    assert cfg.workers == 2
    assert not cfg.save_images and not cfg.record_runtime
    assert cfg.inputs == ["images/Leaves.pgm", "images/monarch.pgm"]
    assert cfg.tv.beta == 64.0 and cfg.tv.max_outer == 10
    assert not cfg.tv.use_nllm
    assert cfg.tv.nlm.patch_side == 5
    assert cfg.patches.group_size == 30
    assert cfg.patches.tau_hard == 12.5
    assert cfg.refine.mu1 == 0.01
    assert cfg.refine.patches is cfg.patches
    assert cfg.dcvs.gop_size == 4
    assert cfg.dcvs.nonkey.mu3 == 0.1
    assert cfg.dcvs.nonkey.mh.search_radius == 3

def test_missing_sections_use_defaults(tmp_path) -> None:
    cfg = load_config(write_config(tmp_path, """
        [general]
        method = gst
    """))

    assert cfg.refine_mode == "gst"
    assert cfg.inputs == []
    assert cfg.sides == [32]

@pytest.mark.parametrize("text", [
        "[general]\nmethod = wavelets\n",
        "[general]\nsubrates = 0.5, 1.5\n",
        "[general]\nblock_side = many\n",
        "[general]\nworkers = 0\n",
        "[tv]\nbeta = -1\n",
        "[refine]\nmu1 = 0\n",
        "[dcvs]\ngop_size = 1\n",
        "this is not an ini file\n",
])
def test_invalid_files(tmp_path, text: str) -> None:
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, text))

def test_unreadable_file(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.conf"))

def test_validation() -> None:
    with pytest.raises(ConfigError):
        ExperimentConfig(subrates=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(block_sides=[0])

def test_parse_list() -> None:
    assert parse_list("1, 2,3 ,", int) == [1, 2, 3]
    assert parse_list("", float) == []
