import dataclasses

import numpy as np
import pytest

from splatss import gass, ltfi
from splatss.errors import ConfigurationError, ContractError, FormatError
from splatss.harness import cli
from splatss.harness.bench import VARIANTS, ablate, bench, frame_times, path_from_config, scene_from_config
from splatss.harness.checkpoint import ModelCheckpoint, build_model
from splatss.harness.config import RunConfig, parse_resolution, read_config_file, write_config_file
from splatss.harness.data import check_split, eval_seed, mid_times, sample_times, train_seed
from splatss.harness.pipeline import PipelineFlags, render_sequence
from splatss.harness.train import TrainConfig, train_gass, train_ltfi
from splatss.scene.ply import load_ply

SMALL = dict(lr_res=(16, 16), scale=2, frames=3, gaussians=400)
TINY_TRAIN = TrainConfig(steps=3, lr_res=(16, 16), gaussians=300, n_sequences=2, unroll=3)


def small_cfg(**kw):
    return RunConfig(**{**SMALL, **kw})


def trained_pair(seed=0):
    gm = gass.GassModel(2, seed=seed)
    gm.head.weight.data[...] = np.random.default_rng(seed).uniform(-0.05, 0.05, gm.head.weight.shape)
    lm = ltfi.LtfiModel(2, seed=seed)
    lm.head_color.weight.data[...] = np.random.default_rng(seed + 1).uniform(-0.2, 0.2, lm.head_color.weight.shape)
    return gm, lm


# ---------------------------------------------------------------------------
# configuration


def test_parse_resolution():
    assert parse_resolution("96x64") == (96, 64)
    assert parse_resolution("240X135") == (240, 135)
    with pytest.raises(ConfigurationError):
        parse_resolution("96")


@pytest.mark.parametrize("bad", [dict(scale=3), dict(frames=1), dict(ablate=("no_vgg",)),
                                 dict(ablate=("no_gai",), fallback_upsampler=None),
                                 dict(lr_res=(4, 16))])
def test_run_config_validation(bad):
    with pytest.raises(ConfigurationError):
        small_cfg(**bad)


def test_hr_is_scale_times_lr():
    assert small_cfg(lr_res=(24, 16), scale=4).hr_res == (96, 64)


def test_config_file_roundtrip_and_unknown_key(tmp_path):
    cfg = small_cfg(ablate=("no_gi", "no_tru"), seed=7, serial=True, checkpoints=("a.ckpt",))
    write_config_file(cfg, tmp_path / "run.ini")
    assert RunConfig(**read_config_file(tmp_path / "run.ini")) == cfg
    (tmp_path / "bad.ini").write_text("[run]\nscale = 2\nwarp_speed = 9\n")
    with pytest.raises(ConfigurationError, match="warp_speed"):
        read_config_file(tmp_path / "bad.ini")
    (tmp_path / "dash.ini").write_text("[run]\nlr-res = 32x16\n")
    assert read_config_file(tmp_path / "dash.ini") == {"lr_res": (32, 16)}


# ---------------------------------------------------------------------------
# data split


def test_seed_ranges_are_disjoint():
    check_split([train_seed(k) for k in range(50)], [eval_seed(k) for k in range(50)])
    with pytest.raises(ContractError):
        check_split([train_seed(3)], [train_seed(3)])
    with pytest.raises(ContractError):
        check_split([eval_seed(0)], [eval_seed(1)])


def test_sample_and_mid_times():
    assert sample_times(3) == [0.0, 0.5, 1.0]
    assert mid_times(3) == [0.25, 0.75]
    assert frame_times(3) == [0.0, 0.25, 0.5, 0.75, 1.0]


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip_is_byte_identical(tmp_path):
    gm, _ = trained_pair()
    ck = ModelCheckpoint.from_model("gass", gm, seed=3)
    ck.save(tmp_path / "g.ckpt")
    again = ModelCheckpoint.load(tmp_path / "g.ckpt")
    assert again.to_bytes() == ck.to_bytes()
    model = build_model(again)
    assert model.scale == 2
    for (name, p), (_, q) in zip(gm.named_parameters(), model.named_parameters()):
        np.testing.assert_array_equal(p.data, q.data, err_msg=name)
    assert ModelCheckpoint.from_model("gass", model, seed=3).to_bytes() == ck.to_bytes()


def test_checkpoint_rejects_unknown_and_missing_names():
    _, lm = trained_pair()
    ck = ModelCheckpoint.from_model("ltfi", lm)
    ck.tensors["mystery.weight"] = np.zeros(3, np.float32)
    with pytest.raises(FormatError, match="mystery.weight"):
        build_model(ck)
    ck = ModelCheckpoint.from_model("ltfi", lm)
    name = next(iter(dict(lm.named_parameters())))
    del ck.tensors[name]
    with pytest.raises(FormatError, match=name):
        build_model(ck)
    with pytest.raises(FormatError):
        ModelCheckpoint.from_bytes(b"NOPE" + bytes(12))
    with pytest.raises(FormatError):
        build_model(ModelCheckpoint("vae"))


# ---------------------------------------------------------------------------
# sequence rendering


def sequence(serial, flags=None, frames=3):
    cfg = small_cfg(frames=frames)
    gm, lm = trained_pair()
    return render_sequence(scene_from_config(cfg), path_from_config(cfg), frames, 2, gm, lm,
                           flags, serial=serial)


def test_cadence_and_no_hr_renders():
    res = sequence(serial=False)
    assert len(res.frames) == 5
    assert [f.kind for f in res.frames] == ["upscaled", "interpolated"] * 2 + ["upscaled"]
    assert [f.time for f in res.frames] == frame_times(3)
    assert all(f.image.shape == (3, 32, 32) for f in res.frames)
    led = res.ledger
    assert led.hr_renders == 0 and led.lr_renders == 3
    assert led.frames_output == 5 and led.counted_frames == 4
    assert len(led.stages["gass"]) == 3 and len(led.stages["ltfi"]) == 2


@pytest.mark.parametrize("names", [(), ("no_gtrr",), ("no_gi", "no_tru")])
def test_pipeline_equals_serial(names):
    flags = PipelineFlags.from_names(names)
    a, b = sequence(True, flags), sequence(False, flags)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.image.tobytes() == fb.image.tobytes()


def test_pipeline_flags_map_to_stages():
    f = PipelineFlags.from_names(["no_gai"])
    assert f.gass() == gass.GassFlags(no_gtrr=True, no_gai=True)
    assert PipelineFlags.from_names(["no_tru"]).ltfi() == ltfi.LtfiFlags(no_tru=True)


def test_render_sequence_contracts():
    cfg = small_cfg()
    gm, lm = trained_pair()
    with pytest.raises(ContractError):
        render_sequence(scene_from_config(cfg), path_from_config(cfg), 1, 2, gm, lm)
    with pytest.raises(ContractError):
        render_sequence(scene_from_config(cfg), path_from_config(cfg), 3, 4, gm, lm)


# ---------------------------------------------------------------------------
# bench


def test_bench_rows_and_native_self_comparison():
    cfg = small_cfg(serial=True)
    gm, lm = trained_pair()
    rep = bench(cfg, gm, lm)
    assert len(rep.psnr_per_frame) == 5
    assert rep.extra["hr_renders"] == 0 and rep.extra["counted_frames"] == 4
    native = bench(cfg, mode="native")
    assert native.psnr_per_frame == [99.0] * 5


# ---------------------------------------------------------------------------
# training


def test_no_gtrr_never_updates_refinement():
    model = gass.GassModel(2, seed=0)
    before = [p.data.copy() for p in model.refinement_parameters()]
    interp = [p.data.copy() for p in model.interpolation_parameters()]
    train_gass(dataclasses.replace(TINY_TRAIN, no_gtrr=True), model=model)
    for a, p in zip(before, model.refinement_parameters()):
        np.testing.assert_array_equal(a, p.data)
    assert any(not np.array_equal(a, p.data) for a, p in zip(interp, model.interpolation_parameters()))


def test_training_is_byte_deterministic():
    _, a, _ = train_gass(TINY_TRAIN)
    _, b, _ = train_gass(TINY_TRAIN)
    assert a.to_bytes() == b.to_bytes()
    _, c, log = train_ltfi(TINY_TRAIN)
    _, d, _ = train_ltfi(TINY_TRAIN)
    assert c.to_bytes() == d.to_bytes()
    assert len(log.losses) == 3 and np.isfinite(log.final_loss)
    assert {"initial_alpha", "final_alpha"} <= set(log.extra)


# ---------------------------------------------------------------------------
# command line

CLI_SMALL = ["--lr-res", "16x16", "--scale", "2", "--frames", "3", "--gaussians", "300"]


def test_unknown_flag_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bench", "--warp-speed"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_bad_value_returns_error_code(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[run]\nframes = 1\n")
    assert cli.main(["bench", "--config", str(tmp_path / "bad.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_synth_scene_writes_ply_and_path(tmp_path):
    assert cli.main(["synth-scene", "--gaussians", "50", "--seed", "4", "--write-path",
                     "--out", str(tmp_path)]) == 0
    assert load_ply(tmp_path / "scene.ply").count == 50
    assert (tmp_path / "path.txt").exists()


def test_config_file_overrides_flags(tmp_path, capsys):
    (tmp_path / "run.ini").write_text("[run]\nframes = 2\n")
    cli.main(["bench", *CLI_SMALL, "--serial", "--config", str(tmp_path / "run.ini"),
              "--out", str(tmp_path)])
    assert (tmp_path / "metrics.csv").read_text().count("\n") == 1 + 3


def test_bench_twice_gives_identical_rows(tmp_path, capsys):
    rows = []
    for run in range(2):
        out = tmp_path / str(run)
        assert cli.main(["bench", *CLI_SMALL, "--seed", "5", "--serial", "--out", str(out)]) == 0
        rows.append((out / "metrics.csv").read_text())
    assert rows[0] == rows[1] and rows[0].count("\n") == 6


def test_ablate_emits_five_rows(tmp_path, capsys):
    assert cli.main(["ablate", *CLI_SMALL, "--serial", "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert len(table) == 6 and [r.split()[0] for r in table[1:]] == list(VARIANTS)
    assert len((tmp_path / "ablation.csv").read_text().strip().splitlines()) == 6


def test_train_render_upsample_interpolate(tmp_path, capsys):
    ck = tmp_path / "g.ckpt"
    assert cli.main(["train-gass", "--steps", "2", "--sequences", "1", *CLI_SMALL,
                     "--checkpoint", str(ck), "--out", str(tmp_path)]) == 0
    assert "final_loss" in capsys.readouterr().out
    assert cli.main(["render", *CLI_SMALL, "--out", str(tmp_path / "r")]) == 0
    assert len(list((tmp_path / "r").glob("*.ppm"))) >= 3
    assert cli.main(["upsample", *CLI_SMALL, "--checkpoint", str(ck), "--out", str(tmp_path / "u")]) == 0
    assert len(list((tmp_path / "u").glob("*.ppm"))) == 3
    assert cli.main(["interpolate", *CLI_SMALL, "--out", str(tmp_path / "i")]) == 0
    assert len(list((tmp_path / "i").glob("*.ppm"))) == 5
    assert "hr_renders: 0" in capsys.readouterr().out


def test_ablate_runs_via_the_api():
    rows = ablate(small_cfg(serial=True, frames=2), *trained_pair())
    assert [r.name for r in rows] == list(VARIANTS)
