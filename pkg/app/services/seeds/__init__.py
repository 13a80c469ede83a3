# Seeds and pseudo ground truth