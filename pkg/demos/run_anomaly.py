"""Replay a handful of packets through the software engine.

A large packet and a port-80 packet, in either order, arm the machine.
A UDP packet or a busy window completes it. Each packet carries one
symbol: the lowest-numbered predicate it satisfies. The emitted value is the byte count seen
since the machine left its initial state.

Run: python3 demos/run_anomaly.py
"""
from pathlib import Path

from p4cep import EventPacket, compile_source, deploy, load_headers

DATA = Path(__file__).parent / "data"
program = compile_source((DATA / "listing1.rules").read_text(),
                         load_headers(DATA / "l3l4.headers"))


def pkt(seq, length, port, proto):
    return EventPacket(seq, {"ipv4.totalLen": length, "tcp.dstPort": port,
                             "ipv4.protocol": proto})


trace = [
    pkt(1, 100, 80, 6),   # port 80 first
    pkt(2, 100, 443, 6),  # matches nothing, skipped
    pkt(3, 600, 443, 6),  # then the large packet
    pkt(4, 100, 53, 17),  # UDP completes the pattern
    pkt(5, 1500, 443, 6),
    pkt(6, 1500, 443, 6),
    pkt(7, 1500, 443, 6),
    pkt(8, 1500, 443, 6),
    pkt(9, 400, 80, 6),   # port 80 arrives after the large packets
    pkt(10, 100, 443, 6), # window sum is now above 6000
]

handle = deploy(program)
for p in trace:
    for em in handle.ingest(p):
        print(f"packet {em.seq}: {em.event} fired with value {em.value}")
print()
print(handle.snapshot().to_text(), end="")
