# 旋转预处理三元组键量化器
# Rotation-preconditioned triplet key quantizer
