"""Shared fixtures: one toy corpus and one trained tiny model per session."""

import numpy as np
import pytest

from vocdet import audio, corpus, detector, synth, training, vocoders

# fixture seeds, pinned so split composition stays balanced (24/24, 12/12, 12/12)
SOURCE_SEED = 7
BUILD_SEED = 11
SPLIT_SEED = 1

TOY_SPEAKERS = 8
TOY_UTTERANCES = 12
TOY_DURATION = 1.5
GL_ITERS = 8  # enough for audible reconstruction artifacts, cheap to run


def toy_registry(p: audio.MelParams) -> vocoders.VocoderRegistry:
    return vocoders.VocoderRegistry([
        vocoders.toy_artifact_backend(p, "comb", delay=16, gain=0.9, n_iters=GL_ITERS),
        vocoders.toy_artifact_backend(p, "quantize", bits=4, n_iters=GL_ITERS),
    ])


@pytest.fixture(scope="session")
def mel_params():
    return audio.MelParams()


@pytest.fixture(scope="session")
def toy_source(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy-source")
    synth.make_toy_source(
        root,
        n_speakers=TOY_SPEAKERS,
        utterances_per_speaker=TOY_UTTERANCES,
        duration=TOY_DURATION,
        seed=SOURCE_SEED,
    )
    return root


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory, toy_source, mel_params):
    out = tmp_path_factory.mktemp("toy-corpus")
    registry = toy_registry(mel_params)
    manifest = corpus.build_corpus(toy_source, registry, mel_params, BUILD_SEED, out)
    manifest = corpus.split_manifest(manifest, (0.5, 0.25, 0.25), SPLIT_SEED)
    manifest.save(out / "manifest.tsv")
    for split in ("train", "dev", "test"):
        labels = {r.label for r in manifest.subset(split)}
        assert labels == {0, 1}, f"fixture split {split} lost a label: {labels}"
    return manifest


@pytest.fixture(scope="session")
def toy_noise():
    return synth.toy_noise(4.0, 24000, np.random.default_rng(123))


@pytest.fixture(scope="session")
def trained_tiny(tmp_path_factory, toy_manifest):
    """One 300-step multi-task training run shared by scoring/eval/CLI tests."""
    workdir = tmp_path_factory.mktemp("tiny-run")
    mcfg = detector.tiny_config(num_vocoder_classes=3, seed=0)
    tcfg = training.TrainConfig(
        lam=0.5, learning_rate=1e-3, batch_size=16, max_steps=300,
        seed=0, eval_interval=50,
    )
    state = training.train(toy_manifest, mcfg, tcfg, workdir)
    return {"state": state, "workdir": workdir, "mcfg": mcfg, "tcfg": tcfg}
