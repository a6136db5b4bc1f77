"""扩散模型反向采样 SNR 诊断与小波差分校正"""

__version__ = "0.1.0"
