"""
Waveform and spectrogram handling
"""
