# Classifier training