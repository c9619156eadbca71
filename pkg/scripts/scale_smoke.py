"""Time the pipeline against a synthetic archive.

Generates N crew-list records (one ship, five crew each), runs the full
import -> publish -> transform -> query loop, and prints wall-clock
timings per stage. Useful for spotting regressions that only show at
four digits of records.

Run:  python3 scripts/scale_smoke.py [--records 1000]
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from support import CREW_MAPPING, CREW_TEMPLATE, ONTOLOGY_DOC, PREFIX

from quire.config import EngineConfig
from quire.engine import Workspace

ONT = PREFIX + "/ontology/"

RANKS = ["master", "mate", "boatswain", "cook", "seaman"]
TYPES = ["brig", "schooner", "barque"]


def synthetic_record(i: int) -> dict:
    crew = []
    for j in range(5):
        crew.append(
            {
                "cells": {
                    "First name": {"raw": f"Name{(i * 7 + j) % 211}"},
                    "Last name": {"raw": f"Family{(i * 13 + j) % 389}"},
                    "Rank": {"raw": RANKS[(i + j) % len(RANKS)]},
                    "Age": {"raw": str(18 + (i + j) % 40)},
                    "Embarkation date": {"raw": f"18{55 + i % 10}-0{1 + j % 9}-15"},
                }
            }
        )
    return {
        "id": f"s{i:05d}",
        "template_id": "crew-list",
        "template_version": 1,
        "metadata": {"transcriber": "generator"},
        "tables": {
            "Ship": [
                {
                    "cells": {
                        "Ship name": {"raw": f"Vessel {i}"},
                        "Ship type": {"raw": TYPES[i % 3]},
                        "Tonnage": {"raw": str(80 + i % 300)},
                        "Construction year": {"raw": f"18{30 + i % 20}-06-01"},
                        "Construction place": {"raw": f"Yard {i % 20}"},
                        "Registry port": {"raw": f"Port {i % 30}"},
                        "Owner": {"raw": f"House {i % 50}"},
                    }
                }
            ],
            "Crew": crew,
        },
    }


def timed(label: str, fn):
    t0 = time.monotonic()
    out = fn()
    print(f"{label:<12} {time.monotonic() - t0:8.2f}s")
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--records", type=int, default=1000)
    parser.add_argument("--keep", metavar="DIR", default=None, help="workspace directory to keep (default: temp)")
    args = parser.parse_args()

    if args.keep:
        data_dir, cleanup = Path(args.keep), None
    else:
        cleanup = tempfile.TemporaryDirectory(prefix="quire-scale-")
        data_dir = Path(cleanup.name) / "ws"

    ws = Workspace.init(data_dir, EngineConfig(uri_prefix=PREFIX))
    ws.import_ontology(json.dumps(ONTOLOGY_DOC))
    ws.import_template(CREW_TEMPLATE)
    ws.import_mapping(CREW_MAPPING)

    n = args.records
    ids = [f"s{i:05d}" for i in range(n)]

    def do_import():
        for i in range(n):
            ws.import_record(synthetic_record(i), author="generator")

    timed("import", do_import)
    timed("publish", lambda: ws.publish_many(ids))
    report = timed("transform", ws.transform)
    assert len(report["records"]) == n

    export = timed("export", ws.export_nquads)
    quads = export.count(b"\n")

    query = {
        "patterns": [["?s", f"<{ONT}ship-type>", "?t"]],
        "select": ["?s"],
        "group_by": "?t",
        "aggregate": "count",
    }
    result = timed("query", lambda: ws.query(query))
    assert result["total"] == n

    print(f"\n{n} records -> {quads} quads ({quads / n:.0f} per record)")
    for row in result["rows"]:
        group = row["group"]
        label = group["iri"].rsplit("/", 1)[-1] if isinstance(group, dict) else group
        print(f"  {label}: {row['count']}")

    if cleanup:
        cleanup.cleanup()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
