import os
import pathlib
import sys

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
BUILD = pathlib.Path(os.environ.get("MDCGAN_BUILD_DIR", ROOT / "build"))

# the extension is imported from the build tree unless installed
if "MDCGAN_NO_BUILD_PATH" not in os.environ:
    sys.path.insert(0, str(BUILD / "python"))


@pytest.fixture(scope="session")
def cli():
    if "MDCGAN_CLI" in os.environ:
        path = pathlib.Path(os.environ["MDCGAN_CLI"])
        assert path.exists(), f"MDCGAN_CLI points at a missing file: {path}"
        return path
    path = BUILD / "tools" / "mdcgan"
    if not path.exists():
        pytest.skip(f"mdcgan executable not built at {path}")
    return path
