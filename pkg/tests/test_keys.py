"""Wallet keys: deterministic derivation and detached signatures."""

from ruledger.keys import KeyPair, verify_signature, verify_signature_obj


def test_sign_verify_round_trip():
    kp = KeyPair.generate()
    sig = kp.sign(b"payload")
    assert verify_signature(b"payload", sig, kp.public_hex)


def test_wrong_key_and_tampered_message_fail():
    kp, other = KeyPair.generate(), KeyPair.generate()
    sig = kp.sign(b"payload")
    assert not verify_signature(b"payload", sig, other.public_hex)
    assert not verify_signature(b"payload2", sig, kp.public_hex)


def test_malformed_hex_inputs_fail_closed():
    kp = KeyPair.generate()
    sig = kp.sign(b"x")
    assert not verify_signature(b"x", "zz-not-hex", kp.public_hex)
    assert not verify_signature(b"x", sig, "deadbeef")  # wrong length key
    assert not verify_signature(b"x", "", kp.public_hex)


def test_seeded_keys_are_reproducible():
    a = KeyPair.from_seed(7, "node0")
    b = KeyPair.from_seed(7, "node0")
    assert a.public_hex == b.public_hex
    # Both instances must produce verifiable signatures over the same bytes.
    assert verify_signature(b"m", a.sign(b"m"), b.public_hex)


def test_seeded_keys_differ_by_label_and_seed():
    keys = {
        KeyPair.from_seed(7, "node0").public_hex,
        KeyPair.from_seed(7, "node1").public_hex,
        KeyPair.from_seed(8, "node0").public_hex,
    }
    assert len(keys) == 3


def test_sign_obj_matches_canonical_signature():
    kp = KeyPair.from_seed(1, "x")
    obj = {"b": 2, "a": 1}
    assert verify_signature_obj({"a": 1, "b": 2}, kp.sign_obj(obj), kp.public_hex)


def test_repr_does_not_leak_private_material():
    kp = KeyPair.from_seed(3, "leak-check")
    text = repr(kp)
    assert "private" not in text.lower() or "public" in text
    assert kp.public_hex[:16] in text
    assert len(text) < 64
