import hypothesis
import numpy as np

hypothesis.settings.register_profile(
    "default", max_examples=50, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("default")

np.seterr(all="raise", under="ignore")
