# Segmentation and localization metrics