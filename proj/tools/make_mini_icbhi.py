#!/usr/bin/env python3
"""Regenerate data/mini_icbhi: twelve synthetic recordings named and annotated
like the ICBHI corpus, plus a patient diagnosis file.

The audio is filtered noise shaped into breathing cycles, with a tonal
component per diagnosis so that the files are not all alike. Output is
byte-for-byte reproducible.
"""

import math
import random
import struct
import sys
import wave
from pathlib import Path

# (file stem, sample rate, channels, bytes per sample, seconds)
RECORDINGS = [
    ("101_1b1_Al_sc_Meditron", 4000, 1, 2, 2.0),
    ("102_1b1_Ar_sc_Meditron", 4000, 1, 2, 2.5),
    ("103_2b2_Ar_mc_LittC2SE", 44100, 2, 2, 1.5),
    ("104_1b1_Al_sc_Litt3200", 22050, 1, 3, 2.0),
    ("104_1b1_Ar_sc_Litt3200", 22050, 1, 2, 2.0),
    ("107_2b3_Al_mc_AKGC417L", 44100, 1, 2, 1.5),
    ("107_2b3_Ar_mc_AKGC417L", 44100, 2, 4, 1.5),
    ("111_1b2_Tc_sc_Meditron", 4000, 1, 2, 3.0),
    ("115_1b1_Ar_sc_Meditron", 4000, 1, 2, 2.0),
    ("121_1b1_Tc_sc_Meditron", 4000, 1, 2, 2.5),
    ("122_2b1_Al_mc_LittC2SE", 44100, 1, 2, 1.5),
    ("149_1b1_Lr_sc_Meditron", 22050, 1, 2, 2.0),
]

DIAGNOSES = {
    101: "URTI",
    102: "Healthy",
    103: "Asthma",
    104: "COPD",
    107: "COPD",
    111: "Bronchiectasis",
    115: "LRTI",
    121: "Healthy",
    122: "Pneumonia",
    149: "Bronchiolitis",
}

TONE_HZ = {
    "Healthy": 0.0,
    "COPD": 400.0,
    "URTI": 250.0,
    "LRTI": 600.0,
    "Bronchiectasis": 800.0,
    "Bronchiolitis": 900.0,
    "Asthma": 500.0,
    "Pneumonia": 700.0,
}

CYCLE_S = 0.5


def synthesize(rng, rate, seconds, tone_hz):
    n = int(round(rate * seconds))
    out = []
    low = 0.0
    for i in range(n):
        t = i / rate
        envelope = 0.5 - 0.5 * math.cos(2 * math.pi * t / CYCLE_S)
        low += 0.2 * (rng.uniform(-1.0, 1.0) - low)
        x = 0.35 * envelope * low
        if tone_hz > 0.0 and tone_hz < rate / 2:
            x += 0.2 * envelope * math.sin(2 * math.pi * tone_hz * t)
        out.append(max(-1.0, min(1.0, x)))
    return out


def encode(samples, channels, width):
    scale = float(1 << (8 * width - 1))
    frames = bytearray()
    for k, x in enumerate(samples):
        for c in range(channels):
            v = x if c == 0 else 0.8 * x + 0.05 * math.sin(k * 0.01)
            q = int(round(v * (scale - 1)))
            frames += q.to_bytes(width, "little", signed=True)
    return bytes(frames)


def annotation(seconds, rng):
    lines = []
    t = 0.0
    while t + CYCLE_S <= seconds + 1e-9:
        lines.append(f"{t:.3f}\t{t + CYCLE_S:.3f}\t{rng.randint(0, 1)}\t{rng.randint(0, 1)}")
        t += CYCLE_S
    return "\n".join(lines) + "\n"


def main():
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "mini_icbhi"
    audio = root / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    for stem, rate, channels, width, seconds in RECORDINGS:
        patient = int(stem.split("_")[0])
        rng = random.Random(stem)
        samples = synthesize(rng, rate, seconds, TONE_HZ[DIAGNOSES[patient]])
        with wave.open(str(audio / f"{stem}.wav"), "wb") as w:
            w.setnchannels(channels)
            w.setsampwidth(width)
            w.setframerate(rate)
            w.writeframes(encode(samples, channels, width))
        (audio / f"{stem}.txt").write_text(annotation(seconds, rng))
    with open(root / "patient_diagnosis.csv", "w") as f:
        for patient, diagnosis in sorted(DIAGNOSES.items()):
            f.write(f"{patient},{diagnosis}\n")


if __name__ == "__main__":
    main()
