"""Smoke test for the litrag Python extension.

Build and install the extension, then run this script:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py

Everything runs offline with the mock providers.
"""

import math
import pathlib
import sys
import tempfile

import litrag

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def check(cond, message):
    if not cond:
        print(f"FAIL: {message}")
        sys.exit(1)


def main():
    sentences = litrag.split_sentences("Dr. Moreau measured 3.5 mg. Residues persisted!  Why?")
    check(sentences == ["Dr. Moreau measured 3.5 mg.", "Residues persisted!", "Why?"], f"sentences {sentences}")

    vec = litrag.mock_embed("x", 4, 7)
    check(len(vec) == 4 and abs(math.sqrt(sum(v * v for v in vec)) - 1.0) < 1e-5, "mock embedding is not unit length")

    chunks = litrag.chunk_text("Alpha one. Alpha two. Beta three.", method="sentence")
    check([c["sentence_range"] for c in chunks] == [[0, 0], [1, 1], [2, 2]], f"chunks {chunks}")

    with tempfile.TemporaryDirectory() as tmp:
        index = pathlib.Path(tmp) / "index"
        summary = litrag.ingest(str(FIXTURES / "corpus"), str(index))
        check(summary["documents"] == 6, f"ingest summary {summary}")
        built = litrag.build_indexes(str(index))
        check(built["graph_edges"] > 0 and built["vector_entries"] > 0, f"build summary {built}")

        engine = litrag.Engine.open(str(index))
        check(engine.has_vector_index and engine.has_graph, repr(engine))
        docs = engine.documents()
        check(len(docs) == 6, "document listing")

        for mode in ("vector", "graph", "hybrid"):
            answer = engine.query("Where does atrazine persist?", mode=mode)
            check(answer["mode"] == mode, f"mode {answer['mode']}")
            for citation in answer["citations"]:
                chunk = engine.chunk(citation["chunk_id"])
                check(chunk is not None and chunk["doc_id"] == citation["doc_id"], "citation does not resolve")

        doc_id = docs[0]["doc_id"]
        scoped = engine.query("What was measured?", doc=doc_id)
        check(all(c["doc_id"] == doc_id for c in scoped["citations"]), "doc filter leaked other documents")

        try:
            engine.query("anything", mode="sideways")
        except litrag.LitragError:
            pass
        else:
            check(False, "bad mode did not raise LitragError")

        filtered = pathlib.Path(tmp) / "filtered.jsonl"
        kept = litrag.filter_testset(
            str(FIXTURES / "testset_4.jsonl"), str(FIXTURES / "annotations_4.csv"), str(filtered)
        )
        check(kept == 2, f"kept {kept}")
        quality = litrag.quality_report(str(FIXTURES / "annotations_4.csv"))
        check(quality["total"] == 4, f"quality {quality}")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
