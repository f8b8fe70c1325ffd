"""Shared fixtures.

Training on the default synthetic subject takes about a second; the fixed
tracking task another few.  Everything expensive is session scoped so each
run happens once per pytest invocation.
"""

import pytest

from neurotrack import (
    FilterBankSpec,
    SessionConfig,
    default_subject,
    run_fixed_task,
    train_decoder,
)


@pytest.fixture(scope="session")
def config():
    return SessionConfig()


@pytest.fixture(scope="session")
def fb_spec():
    return FilterBankSpec()


@pytest.fixture(scope="session")
def trained(config):
    """Default subject plus a decoder trained on its calibration runs."""
    subject = default_subject()
    bundle, regression = train_decoder(subject, config)
    return subject, bundle, regression


@pytest.fixture(scope="session")
def fixed_records(trained, config):
    """One full fixed-sequence tracking session (3 blocks of 32 targets)."""
    subject, bundle, _ = trained
    return run_fixed_task(subject, bundle, config)


@pytest.fixture(scope="session")
def noiseless_trained(config):
    """Same pipeline with the noise generator silenced entirely."""
    subject = default_subject().with_noise(0.0)
    bundle, regression = train_decoder(subject, config)
    return subject, bundle, regression
