import json
import os
import tempfile

CACHE_VERSION = 3


def cache_key(url):
    return url.replace("/", "_").replace(":", "_")


def read_cache(path):
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CACHE_VERSION:
        return None
    return payload["data"]


def write_cache(data):
    fd, path = tempfile.mkstemp(suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump({"version": CACHE_VERSION, "data": data}, fh)
    return path
