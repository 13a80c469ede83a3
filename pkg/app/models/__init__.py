# Classifier and per-pixel label masks
