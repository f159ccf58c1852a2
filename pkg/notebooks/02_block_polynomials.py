"""
Block-wise polynomial approximation
===================================

How fast the best block polynomial approaches a smooth signal as the
number of blocks grows.
"""

# %%
import numpy as np
import permsmooth as ps

c = ps.canonical_clustering(10, 3)
print("assignment", c.assignment, "sizes", c.sizes)
print("basis for m=2, l=2:", ps.monomial_basis(2, 2))

# %% noiseless approximation error against k
f = ps.builtin_model(3, symmetric=True)
ks = np.array([2, 4, 8, 16])
for degree in (0, 1, 2):
    errs = np.array([ps.approximation_error(f, 64, int(k), degree) for k in ks])
    slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
    shown = " ".join(f"{e:.2e}" for e in errs)
    print(f"l={degree}: errors {shown}  slope {slope:.2f}")

# %% fitted models serialise to JSON
theta = ps.evaluate_signal(f, (16, 16, 16))
model = ps.fit_block_polynomial(theta, (2, 2, 2), 2)
ps.save_model(model, "/tmp/model.json")
again = ps.load_model("/tmp/model.json")
print(np.array_equal(ps.evaluate_model(again).values, ps.evaluate_model(model).values))
