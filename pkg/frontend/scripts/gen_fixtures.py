"""Generate cross-implementation test fixtures for the browser client.

Run from the repository root with the Python package installed; writes
frontend/tests/fixtures.json. Committed output keeps the frontend tests
hermetic.
"""

import json
from pathlib import Path

from archivechain import crypto, ledger, workflow
from archivechain.node import canonical_envelope_bytes, make_envelope

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures.json"


def main() -> None:
    admin = crypto.keygen(b"\x51" * 64)
    clock_value = [1_760_000_000_000]

    def clock():
        clock_value[0] += 5
        return clock_value[0]

    chain = ledger.Chain()
    ledger.genesis(chain, "fixture ledger", admin, 1, clock)
    inner = crypto.sign(admin, b"inner signature")
    for i in range(3):
        tx = ledger.FinalTransaction(
            tx_timestamp=clock_value[0] + 2,
            doc_created_at=clock_value[0],
            metadata={
                "title": f"Fixture doc {i}", "author": "Fixture Author",
                "organization": "Fixture Org", "doc_id": f"fixture-{i}",
                "content_digest": "ab" * 64,
            },
            creator_signature=inner,
            examined_at=clock_value[0] + 1,
            examiner_signature=inner,
            archiver_signature=inner,
        )
        ledger.append(chain, tx, admin, 1, clock)

    lines = [row.to_line() for row in chain.rows]
    # doctor row 2: flip a payload byte, keep everything else
    fields = lines[2].split("\t")
    payload = bytearray.fromhex(fields[2])
    payload[7] ^= 0x20
    doctored = "\t".join([fields[0], fields[1], payload.hex()] + fields[3:])

    keypair = crypto.keygen(b"\x52" * 64)
    message = b"cross-implementation message"
    signature = crypto.sign(keypair, message)

    ts = 1_760_000_123_456
    digest = crypto.digest(b"fixture content")
    transition_sig = workflow.sign_transition(
        keypair, "fixture-doc", workflow.DocumentStatus.APPROVED, ts, digest
    )
    transition_msg = workflow.transition_bytes(
        "fixture-doc", workflow.DocumentStatus.APPROVED, ts, digest
    )

    body = {"doc_id": "fixture-doc", "verdict": "Approved",
            "note": "unicode check: é漢"}
    envelope = make_envelope(keypair, 7, "decide", body, timestamp=ts)

    fixtures = {
        "hash_vectors": [
            {
                "message_hex": b"012345678901234567890123456789012345678901234567890123456789012".hex(),
                "digest_hex": (
                    "486f64c1917879417fef082b3381a4e211c324f074654c38823a7b76f830ad00"
                    "fa1fbae42b1285c0352f227524bc9ab16254288dd6863dccd5b9f54a1ad0541b"
                ),
            },
            {
                "message_hex": bytes.fromhex(
                    "fbe2e5f0eee3c820fbeafaebef20fffbf0e1e0f0f520e0ed20e8ece0ebe5f0f2"
                    "f120fff0eeec20f120faf2fee5e2202ce8f6f3ede220e8e6eee1e8f0f2d1202c"
                    "e8f0f2e5e220e5d1")[::-1].hex(),
                "digest_hex": (
                    "28fbc9bada033b1460642bdcddb90c3fb3e56c497ccd0f62b8a2ad4935e85f03"
                    "7613966de4ee00531ae60f3b5a47f8dae06915d5f2f194996fcabf2622e6881e"
                ),
            },
            {"message_hex": "", "digest_hex": crypto.digest(b"").hex()},
        ],
        "chain_lines": lines,
        "doctored_line": doctored,
        "doctored_index": 2,
        "signer_public_hex": admin.public_bytes().hex(),
        "keypair": {
            "private_hex": keypair.private_bytes().hex(),
            "public_hex": keypair.public_bytes().hex(),
        },
        "signed_message": {
            "message_hex": message.hex(),
            "signature_hex": signature.bytes.hex(),
            "scheme": signature.scheme_id,
        },
        "transition": {
            "doc_id": "fixture-doc",
            "status": "Approved",
            "timestamp": ts,
            "content_digest_hex": digest.hex(),
            "message_hex": transition_msg.hex(),
            "signature_hex": transition_sig.bytes.hex(),
        },
        "envelope": {
            "dict": envelope.to_dict(),
            "signed_bytes_hex": canonical_envelope_bytes(
                envelope.msg_type, envelope.timestamp, envelope.body
            ).hex(),
        },
    }
    OUT.write_text(json.dumps(fixtures, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
