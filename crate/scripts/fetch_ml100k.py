#!/usr/bin/env python3
"""Fetch MovieLens 100K and convert it to the `::`-separated MovieLens 1M layout.

The GroupLens download host is not always reachable, so this pulls the copy
bundled inside the `recbole` wheel from PyPI and rewrites it as

    <out>/ratings.dat   UserID::MovieID::Rating::Timestamp
    <out>/movies.dat    MovieID::Title (Year)::Genre1|Genre2

Usage: scripts/fetch_ml100k.py [OUT_DIR]   (default: data/ml-100k)
"""
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

PREFIX = "recbole/dataset_example/ml-100k/"


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "ml-100k")
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet",
             "-d", tmp, "recbole==1.2.1"])
        wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            inter = z.read(PREFIX + "ml-100k.inter").decode("utf-8")
            items = z.read(PREFIX + "ml-100k.item").decode("utf-8")

    with open(os.path.join(out, "ratings.dat"), "w", encoding="utf-8") as f:
        for line in inter.splitlines()[1:]:
            if not line.strip():
                continue
            user, item, rating, ts = line.split("\t")
            f.write(f"{user}::{item}::{int(float(rating))}::{int(float(ts))}\n")

    with open(os.path.join(out, "movies.dat"), "w", encoding="utf-8") as f:
        for line in items.splitlines()[1:]:
            if not line.strip():
                continue
            item, title, year, genres = line.split("\t")
            title = title.replace("::", ":")
            label = f"{title} ({year})" if year else title
            f.write(f"{item}::{label}::{'|'.join(genres.split())}\n")
    print(f"wrote {out}/ratings.dat and {out}/movies.dat")


if __name__ == "__main__":
    main()
