"""Watch the memory groups forget at their designed speeds.

Each group k of a K-group cell squashes its update rate into the band
((k-1)/K, k/K), so group 1 can only make small updates (long retention)
while group K replaces most of its memory every step.  With the candidate
weights zeroed the memory update becomes a pure decay c' = (1 - r) * c,
and printing c over time shows the bands at work: group 1 holds on for
hundreds of steps, group K is gone within a few.
"""

import numpy as np

from cachedlstm.autodiff import Tape
from cachedlstm.cells import CellState, ClstmParams, bind_params, clstm_step

N_GROUPS = 3
HIDDEN = 12
WIDTH = 8
CHECKPOINTS = (1, 3, 10, 30, 100)


def main():
    rng = np.random.default_rng(5)
    params = ClstmParams(
        n_groups=N_GROUPS,
        w_r=rng.uniform(-0.5, 0.5, (HIDDEN, WIDTH)),
        w_o=rng.uniform(-0.5, 0.5, (HIDDEN, WIDTH)),
        w_c=np.zeros((HIDDEN, WIDTH)),
        u_r=rng.uniform(-0.5, 0.5, (HIDDEN, HIDDEN)),
        u_o=rng.uniform(-0.5, 0.5, (HIDDEN, HIDDEN)),
        u_c=np.zeros((HIDDEN, HIDDEN)),
    )
    tape = Tape()
    bound, _ = bind_params(tape, params)
    state = CellState(c=tape.leaf(np.ones((1, HIDDEN))),
                      h=tape.leaf(np.zeros((1, HIDDEN))),
                      n_groups=N_GROUPS)

    gs = HIDDEN // N_GROUPS
    print(f"{N_GROUPS} groups of {gs} units; memory starts at 1.0 and decays")
    print(f"{'step':>5}" + "".join(f"  group {k} mean c" for k in range(1, N_GROUPS + 1)))
    rates = None
    for step in range(1, max(CHECKPOINTS) + 1):
        x = tape.leaf(rng.normal(size=(1, WIDTH)))
        state, rates = clstm_step(bound, x, state)
        if step in CHECKPOINTS:
            means = [state.c.value[0, (k - 1) * gs:k * gs].mean()
                     for k in range(1, N_GROUPS + 1)]
            print(f"{step:>5}" + "".join(f"  {m:>14.3e}" for m in means))

    print()
    print("update rates of the final step, one band per group:")
    for k in range(1, N_GROUPS + 1):
        seg = rates.r.value[0, (k - 1) * gs:k * gs]
        lo, hi = (k - 1) / N_GROUPS, k / N_GROUPS
        print(f"  group {k}: rates in [{seg.min():.3f}, {seg.max():.3f}], "
              f"band ({lo:.3f}, {hi:.3f})")


if __name__ == "__main__":
    main()
