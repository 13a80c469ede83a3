# Figures and heatmaps