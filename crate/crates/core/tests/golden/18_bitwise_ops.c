m = a & 0xFF | b ^ c;
