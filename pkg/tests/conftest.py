import os

import pytest


@pytest.fixture(scope="session", autouse=True)
def session_cache_dir(tmp_path_factory):
    """Route the reference cache to a per-session directory so expensive
    references are built once per test session and never leak into the
    user's real cache."""
    path = tmp_path_factory.mktemp("expstab-cache")
    old = os.environ.get("EXPSTAB_CACHE_DIR")
    os.environ["EXPSTAB_CACHE_DIR"] = str(path)
    yield str(path)
    if old is None:
        os.environ.pop("EXPSTAB_CACHE_DIR", None)
    else:
        os.environ["EXPSTAB_CACHE_DIR"] = old
