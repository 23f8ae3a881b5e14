"""Independent reference for the simulator's random stream.

Produces the golden draws frozen in tests/golden.rs. The ChaCha block
function is checked against the RFC 7539 section 2.3.2 test vector (20
rounds) before generating 8-round output.
"""
import struct

MASK = 0xFFFFFFFF


def rotl(x, n):
    return ((x << n) | (x >> (32 - n))) & MASK


def quarter(s, a, b, c, d):
    s[a] = (s[a] + s[b]) & MASK; s[d] = rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & MASK; s[b] = rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & MASK; s[d] = rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & MASK; s[b] = rotl(s[b] ^ s[c], 7)


def block(key_words, words12_15, rounds):
    init = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574] + key_words + words12_15
    s = list(init)
    for _ in range(rounds // 2):
        quarter(s, 0, 4, 8, 12); quarter(s, 1, 5, 9, 13)
        quarter(s, 2, 6, 10, 14); quarter(s, 3, 7, 11, 15)
        quarter(s, 0, 5, 10, 15); quarter(s, 1, 6, 11, 12)
        quarter(s, 2, 7, 8, 13); quarter(s, 3, 4, 9, 14)
    return [(a + b) & MASK for a, b in zip(s, init)]


def rfc_check():
    key = list(struct.unpack("<8I", bytes(range(32))))
    nonce = struct.unpack("<3I", bytes.fromhex("000000090000004a00000000"))
    out = block(key, [1, *nonce], 20)
    assert out[0] == 0xE4E7F110 and out[15] == 0x4E3C50A2, hex(out[0])


class Stream:
    def __init__(self, seed, stream_id, rounds=8):
        self.key = list(struct.unpack("<8I", struct.pack("<Q", seed) + bytes(24)))
        self.stream = stream_id
        self.rounds = rounds
        self.counter = 0
        self.buf = []

    def next_u32(self):
        if not self.buf:
            w12_15 = [self.counter & MASK, self.counter >> 32,
                      self.stream & MASK, self.stream >> 32]
            self.buf = block(self.key, w12_15, self.rounds)
            self.counter += 1
        return self.buf.pop(0)

    def next_u64(self):
        lo = self.next_u32()
        hi = self.next_u32()
        return (hi << 32) | lo

    def uniform_int(self, lo, hi):
        rng = hi - lo + 1
        zone = (2**64 - 1) - (2**64 % rng)
        while True:
            x = self.next_u64()
            if x <= zone:
                return lo + x % rng


if __name__ == "__main__":
    rfc_check()
    s = Stream(42, 0)
    print("u64 seed=42 stream=0:", [s.next_u64() for _ in range(4)])
    s = Stream(42, 3)
    print("uniform[0,15] seed=42 stream=3:", [s.uniform_int(0, 15) for _ in range(20)])
    s = Stream(7, 1)
    print("uniform[0,255] seed=7 stream=1:", [s.uniform_int(0, 255) for _ in range(12)])
