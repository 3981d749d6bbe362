"""Triple-GAN: classifier, conditional generator and pair discriminator trained as one game."""
