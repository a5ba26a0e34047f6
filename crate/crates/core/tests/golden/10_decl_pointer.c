_DWORD *v4;
