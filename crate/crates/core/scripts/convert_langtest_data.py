#!/usr/bin/env python3
"""Rebuild the raw StereoSet / CrowS-Pairs files from the copies bundled in
the `langtest` wheel (PyPI), writing them in the original published layouts.

    pip download --no-deps langtest==2.8.0 -d /tmp/wheel
    python3 convert_langtest_data.py /tmp/wheel/langtest-2.8.0-py3-none-any.whl ../data/raw

StereoSet: langtest ships the full dev split, one row per context with the
three candidate sentences as columns. It is regrouped into the
`{"data": {"intrasentence": [...], "intersentence": [...]}}` layout.

CrowS-Pairs: langtest ships a masked subset (single-word differences) without
the `stereo_antistereo` column. `sent_more` / `sent_less` are rebuilt by
filling the mask with `mask1` / `mask2`; direction is written as "stereo".
"""
import csv
import hashlib
import json
import sys
import zipfile


def sid(*parts):
    return hashlib.sha1("\x1f".join(parts).encode()).hexdigest()[:32]


def main(wheel, out_dir):
    z = zipfile.ZipFile(wheel)
    rows = [json.loads(l) for l in z.read("langtest/data/StereoSet/test.jsonl").decode().splitlines() if l.strip()]
    data = {"intrasentence": [], "intersentence": []}
    for r in rows:
        cid = sid(r["type"], r["target"], r["context"])
        sentences = []
        for gold in ("stereotype", "anti-stereotype", "unrelated"):
            sentences.append({
                "sentence": r[gold],
                "id": sid(cid, gold),
                "labels": [],
                "gold_label": gold,
            })
        data[r["type"]].append({
            "id": cid,
            "target": r["target"],
            "bias_type": r["bias_type"],
            "context": r["context"],
            "sentences": sentences,
        })
    with open(f"{out_dir}/stereoset_dev.json", "w") as f:
        json.dump({"version": "1.0-dev-reconstructed", "data": data}, f, ensure_ascii=False)
        f.write("\n")

    text = z.read("langtest/data/Crows-Pairs/test.csv").decode()
    reader = csv.DictReader(text.splitlines())
    with open(f"{out_dir}/crows_pairs.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["", "sent_more", "sent_less", "stereo_antistereo", "bias_type",
                    "annotations", "anon_writer", "anon_annotators"])
        for i, r in enumerate(reader):
            more = r["sentence"].replace("[MASK]", r["mask1"])
            less = r["sentence"].replace("[MASK]", r["mask2"])
            w.writerow([i, more, less, "stereo", r["bias_type"], "", "", ""])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
