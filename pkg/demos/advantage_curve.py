"""
Many samples are needed to see the difference
=============================================

A target hides ``p`` (YES) or ``q`` (NO) on one of ``n/k`` blocks of
coordinates.  Single labels have the same law in both cases; the
distinguisher only wins once enough samples rule out the wrong blocks.
The advantage at a fixed ``m`` drops as ``n`` grows.
"""

from sparsetest import rademacher
from sparsetest.hardness import NO, YES, HardInstanceEnsemble, label_marginal, transcript_experiment
from sparsetest.msg import find_msg_witness

w = find_msg_witness(rademacher(), 2, 1, 4)
ms = [0, 1, 2, 4, 8, 16]
print("n    " + "".join(f"m={m:<6d}" for m in ms))
for n in (3, 12, 48):
    yes = HardInstanceEnsemble.from_witness(w, n, YES)
    no = HardInstanceEnsemble.from_witness(w, n, NO)
    assert label_marginal(yes) == label_marginal(no)
    curve = transcript_experiment(yes, no, ms, trials=200, seed=1)
    print(f"{n:<5d}" + "".join(f"{a:<8.2f}" for a in curve.advantages))
