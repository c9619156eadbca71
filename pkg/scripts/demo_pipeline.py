"""Walk the whole loop once on a throwaway workspace.

Transcribe two crew lists whose people and ports are spelled differently,
publish them, let the rules merge what they can, merge the rest by hand,
derive the graphs, and interrogate the result: a grouped query, a
provenance trace back to the source cells, and a quality report.

Run:  python3 scripts/demo_pipeline.py [--keep DIR]
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from support import CREW_MAPPING, CREW_TEMPLATE, MATCH_RULES, ONTOLOGY_DOC, PREFIX, crew_record

from quire.config import EngineConfig
from quire.engine import Workspace
from quire.naming import RDF_TYPE
from quire.transform import master_iris

ONT = PREFIX + "/ontology/"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--keep", metavar="DIR", default=None, help="workspace directory to keep (default: temp)")
    args = parser.parse_args()

    if args.keep:
        data_dir = Path(args.keep)
        cleanup = None
    else:
        cleanup = tempfile.TemporaryDirectory(prefix="quire-demo-")
        data_dir = Path(cleanup.name) / "ws"

    ws = Workspace.init(data_dir, EngineConfig(uri_prefix=PREFIX))
    ws.import_ontology(json.dumps(ONTOLOGY_DOC))
    ws.import_template(CREW_TEMPLATE)
    ws.import_mapping(CREW_MAPPING)
    print(f"workspace at {data_dir}")

    # Two transcriptions of (plausibly) the same voyage: damaged glyphs in
    # one name, an abbreviated first name in the other, ports spelled apart.
    first = crew_record(
        "r0001",
        ship="Elisa",
        port="Sardinia",
        crew=(("Agostino", "B??ndi", "master", "42", "1855-05-02"),),
    )
    second = crew_record(
        "r0002",
        ship="Luisa",
        port=" SARDINIA ",
        crew=(("A", "Brondi", "mate", "", ""),),
    )
    for doc in (first, second):
        ws.import_record(doc, author="demo")
        report = ws.publish(doc["id"])
        print(f"published {doc['id']}: {report['entities']} entity occurrences, {report['terms']} term occurrences")

    merges = ws.auto_match_doc(MATCH_RULES)
    print(f"\nauto-match merged {len(merges)} identities:")
    for event in merges:
        attrs = ws.curation.canonical_attributes(event.entity_type, event.survivor)
        label = " ".join(v for v in attrs.values() if v)
        print(f"  {event.entity_type}: {label!r} <- {sorted(event.merged)}")

    # The damaged 'B??ndi' never keys equal to 'Brondi'; that calls for a
    # person who has seen the originals.
    people = ws.curation.masters_of("person")
    print(f"\n{len(people)} person identities remain; merging them by hand")
    event = ws.curation.manual_match("person", sorted(people))
    ws.transform()

    iri = master_iris(ws.curation, ws.config)[("person", event.survivor)]
    trail = ws.provenance_of(iri)
    print(f"\nprovenance of {iri}")
    for anchor in trail["anchors"]:
        cells = ", ".join(f"{k}={v!r}" for k, v in anchor["cells"].items())
        print(f"  {anchor['record_id']} / {anchor['table']} row {anchor['row']}: {cells}")

    result = ws.query(
        {
            "patterns": [["?s", f"<{RDF_TYPE}>", f"<{ONT}Ship>"], ["?s", f"<{ONT}ship-type>", "?t"]],
            "select": ["?s"],
            "group_by": "?t",
            "aggregate": "count",
        }
    )
    print("\nships by type:")
    for row in result["rows"]:
        group = row["group"]
        label = group["iri"].rsplit("/", 1)[-1] if isinstance(group, dict) else group
        print(f"  {label}: {row['count']}")

    quality = ws.quality_report(None)
    print("\nquality:")
    for entry in quality["completeness"]:
        rate = "n/a " if entry["rate"] is None else f"{entry['rate']:.2f}"
        print(f"  completeness {entry['table']}.{entry['column']}: {rate} ({entry['filled']}/{entry['rows']})")
    print(f"  schema findings: {len(quality['consistency']['schema'])}")

    export = ws.export_nquads()
    print(f"\nexport: {export.count(chr(10).encode())} quads; last three lines:")
    for line in export.decode().splitlines()[-3:]:
        print(f"  {line}")

    if cleanup:
        cleanup.cleanup()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
