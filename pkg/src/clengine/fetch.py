"""Download and verify the MNIST IDX files listed in the data manifest.

This is the only code path that touches the network, and it runs only
when explicitly invoked (``clengine fetch-mnist``).
"""
from __future__ import annotations

import gzip
import hashlib
import json
import shutil
import urllib.request
from pathlib import Path

from .errors import FormatError

MANIFEST = Path(__file__).with_name("data_manifest.json")
_DIGESTS = ("sha256", "md5")


def load_manifest(path=None) -> dict:
    with open(path or MANIFEST, encoding="utf-8") as f:
        return json.load(f)


def verify(path: Path, expected: dict) -> None:
    algos = [a for a in _DIGESTS if a in expected]
    if not algos:
        raise FormatError(f"manifest entry for {path.name} carries no digest")
    data = Path(path).read_bytes()
    for algo in algos:
        got = hashlib.new(algo, data).hexdigest()
        if got != expected[algo]:
            raise FormatError(f"{path.name}: {algo} {got} does not match manifest {expected[algo]}")


def fetch_mnist(dest, manifest=None, log=print) -> list[Path]:
    """Fetch, verify and decompress every manifest file into ``dest``."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    man = load_manifest(manifest)
    out = []
    for name, digests in man["files"].items():
        gz = dest / name
        if not (gz.exists() and _ok(gz, digests)):
            _download(man["mirrors"], name, gz, log)
            verify(gz, digests)
        raw = dest / name.removesuffix(".gz")
        with gzip.open(gz, "rb") as src, open(raw, "wb") as dst:
            shutil.copyfileobj(src, dst)
        out.append(raw)
    return out


def _ok(path, digests) -> bool:
    try:
        verify(path, digests)
        return True
    except FormatError:
        return False


def _download(mirrors, name, target: Path, log) -> None:
    errors = []
    for base in mirrors:
        url = base + name
        try:
            log(f"downloading {url}")
            with urllib.request.urlopen(url, timeout=60) as r, open(target, "wb") as f:
                shutil.copyfileobj(r, f)
            return
        except OSError as e:
            errors.append(f"{url}: {e}")
    raise OSError("all mirrors failed:\n  " + "\n  ".join(errors))
