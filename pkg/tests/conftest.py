"""Shared fixtures: cached end-to-end runs and the acceptance checklist.

The expensive artifacts (synthetic data, pretrained classifiers, adapted
transformation networks) are memoized per (seed, mc_samples) so the
acceptance tests and the integration tests share work instead of
retraining.  Checklist lines recorded by the acceptance tests are echoed
in the terminal summary so the verdict of every checklist item is visible
in one block even when all tests pass.
"""

from __future__ import annotations

import functools
from types import SimpleNamespace

import numpy as np
import pytest

from etnkit import basemodel, etn, staticscale
from etnkit.rng import split_stream

_CHECKLIST: list[str] = []


def record_check(label: str, ok: bool, detail: str) -> None:
    _CHECKLIST.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CHECKLIST:
        terminalreporter.section("acceptance checklist")
        for line in _CHECKLIST:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def pipeline(seed: int, mc_samples: int = 20):
    """Default-settings run: data, CE pretrain, exports, scalar adaptation."""
    data = basemodel.gen_synth(basemodel.SynthSpec(seed=seed))
    clf = basemodel.pretrain(data["pretrain"], basemodel.PretrainConfig(seed=seed))
    adapt = basemodel.export_bundle(clf, data["adapt"])
    test = basemodel.export_bundle(clf, data["test"])
    ood = basemodel.export_bundle(clf, data["ood"])
    cfg = etn.TrainConfig(seed=seed, mc_samples=mc_samples)
    model, history = etn.train(adapt.features, adapt.logits,
                               adapt.require_labels(), cfg)
    return SimpleNamespace(seed=seed, data=data, clf=clf, adapt=adapt,
                           test=test, ood=ood, cfg=cfg, model=model,
                           history=history)


@functools.lru_cache(maxsize=None)
def static_baseline(seed: int):
    p = pipeline(seed)
    model, history = staticscale.train_static(
        p.adapt.logits, p.adapt.require_labels(),
        staticscale.StaticConfig(seed=seed))
    return model, history


def infer_scores(model, bundle, tag: str, mc_samples: int | None = None):
    """Mirror of the eval command's inference call (same stream tags)."""
    rng = split_stream(model.config.seed, tag)
    m = model.config.mc_samples if mc_samples is None else mc_samples
    return etn.infer(model, bundle.features, bundle.logits, m, rng)


def ood_aupr_mi(id_scores, ood_scores) -> float:
    """ID-positive AUPR of the negated mutual-information score."""
    from etnkit.metrics import aupr
    scores = np.concatenate([-id_scores.mi, -ood_scores.mi])
    labels = np.concatenate([np.ones(id_scores.mi.size, dtype=np.int64),
                             np.zeros(ood_scores.mi.size, dtype=np.int64)])
    return aupr(scores, labels)


@pytest.fixture
def run_cli(capsys):
    """Invoke the command line in-process; returns (exit_code, stdout, stderr)."""
    from etnkit import cli

    def run(*argv):
        argv = [str(a) for a in argv]
        try:
            code = cli.main(argv)
        except SystemExit as exc:  # argparse usage failures
            code = int(exc.code)
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run
