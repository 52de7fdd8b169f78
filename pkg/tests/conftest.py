"""Shared fixtures: synthetic benchmark trees, splits, and trained models.

Everything here is deterministic; session scope keeps the expensive
training steps to one run for the whole suite.
"""

from types import SimpleNamespace

import pytest

from facelab import dispatcher, synth
from facelab.dataset import SplitSpec, flatten, load_labeled_images, scan_dataset, split
from facelab.eigenfaces import train_eigen
from facelab.fisherfaces import train_fisher
from facelab.hmm1d import BlockParams, train_bank

BANDED_DIMS = (64, 64)
LIGHTING_DIMS = (32, 32)


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    synth.write_dataset(synth.make_banded_dataset(), root / "banded")
    synth.write_dataset(synth.make_lighting_dataset(), root / "lighting")
    return root


def _split_bundle(root, k, seed):
    manifest = scan_dataset(root)
    train_m, test_m = split(manifest, SplitSpec(k=k, seed=seed))
    return SimpleNamespace(
        manifest=manifest,
        train=train_m,
        test=test_m,
        train_entries=[(lb, str(p), im) for lb, p, im in load_labeled_images(train_m)],
        test_entries=[(lb, str(p), im) for lb, p, im in load_labeled_images(test_m)],
    )


@pytest.fixture(scope="session")
def banded(data_root):
    return _split_bundle(data_root / "banded", k=5, seed=0)


@pytest.fixture(scope="session")
def lighting(data_root):
    return _split_bundle(data_root / "lighting", k=10, seed=0)


@pytest.fixture(scope="session")
def banded_models(banded):
    vectors = [(lb, flatten(im)) for lb, _, im in banded.train_entries]
    images = [(lb, im) for lb, _, im in banded.train_entries]
    eigen = train_eigen(vectors, 12, BANDED_DIMS)
    fisher = train_fisher(vectors, BANDED_DIMS)
    bank = train_bank(images, BlockParams(10, 9, BANDED_DIMS), n_states=5, klt_dim=10)
    train_images = [im for _, im in images]
    context = dispatcher.calibrate_context(train_images, bank)
    ref_idx = dispatcher.frontal_ref_index(train_images, context)
    frontal = flatten(train_images[ref_idx])
    policy = dispatcher.calibrate_policy(train_images, eigen, frontal, bank, context)
    return SimpleNamespace(
        eigen=eigen, fisher=fisher, bank=bank, context=context, policy=policy,
        frontal=frontal, frontal_idx=ref_idx, train_images=train_images,
    )
