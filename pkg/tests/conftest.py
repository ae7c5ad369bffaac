import pytest

from flexcf import datasets
from flexcf.classifier import ClassifierConfig, train_classifier
from flexcf.data import Encoder, EmpiricalCdf, split


@pytest.fixture(scope="session")
def blobs():
    schema, rows = datasets.make_blobs(600, seed=7)
    return schema, rows


@pytest.fixture(scope="session")
def blobs_split(blobs):
    _, rows = blobs
    return split(rows, seed=0)


@pytest.fixture(scope="session")
def census():
    schema, rows = datasets.make_census(3000, seed=11)
    return schema, rows


@pytest.fixture(scope="session")
def census_split(census):
    _, rows = census
    return split(rows, seed=0)


@pytest.fixture(scope="session")
def census_encoder(census, census_split):
    schema, _ = census
    return Encoder.fit(census_split.train, schema)


@pytest.fixture(scope="session")
def census_cdf(census, census_split):
    schema, _ = census
    return EmpiricalCdf.fit(census_split.train, schema)


@pytest.fixture(scope="session")
def census_classifier(census, census_split):
    schema, _ = census
    cfg = ClassifierConfig(hidden_dims=(64, 64), max_epochs=6)
    return train_classifier(census_split, schema, cfg, seed=0)


@pytest.fixture(scope="session")
def blobs_classifier(blobs, blobs_split):
    schema, _ = blobs
    cfg = ClassifierConfig(hidden_dims=(32, 32), max_epochs=8)
    return train_classifier(blobs_split, schema, cfg, seed=0)
