/* This file has been generated by the Hex-Rays decompiler.
   Copyright (c) 2007-2017 Hex-Rays <info@hex-rays.com>

   Detected compiler: GNU C++
*/

#include <defs.h>


//-------------------------------------------------------------------------
// Function declarations

int __cdecl main(int argc, const char **argv, const char **envp);
void __fastcall sub_8048A10(int a1, _DWORD *a2);
signed int __stdcall sub_8048B24(char *a1, unsigned __int16 a2);
_BYTE *__thiscall std::vector<int>::_M_insert_aux(void *this, int a2);
int (__cdecl *off_804A01C)(const char *, ...);

//-------------------------------------------------------------------------
// Data declarations

_UNKNOWN unk_8048C40; // weak
char byte_804A060[256]; // idb
int dword_804A160 = 0; // weak
const char aD[3] = "%d"; // idb
const wchar_t aWide[] = L"wide";

//----- (08048A10) --------------------------------------------------------
void __fastcall sub_8048A10(int a1, _DWORD *a2)
{
  unsigned int v2; // eax@1
  __int64 v3; // qax@2
  signed __int8 v4; // cf@3
  _QWORD *v5; // rdx@5
  float v6; // xmm0_4@7
  double v7; // st7@7

  v2 = *a2 + 4 * a1;
  LODWORD(v3) = v2 >> 3;
  HIDWORD(v3) = __ROL4__(v2, 5);
  v4 = __CFADD__(v2, a1);
  if ( (signed int)v2 <= 0x7FFFFFFF && !v4 )
  {
    v5 = (_QWORD *)&a2[2 * a1 + 1];
    *v5 = v3;
    LOBYTE(v2) = BYTE1(v2) ^ 0x5A;
  }
  v6 = (float)(signed int)v2 * 0.5f;
  v7 = v6 + 1.0e-3;
  *(float *)&dword_804A160 = v7;
  a2[-1] = ~v2 & 0xFFu;
}

//----- (08048B24) --------------------------------------------------------
signed int __stdcall sub_8048B24(char *a1, unsigned __int16 a2)
{
  signed int result; // eax@2
  int i; // [sp+1Ch] [bp-Ch]@1
  char v4; // [esp+13h] [ebp-15h]@3

  for ( i = 0; i < a2 && a1[i]; ++i )
  {
    v4 = a1[i];
    if ( (unsigned __int8)(v4 - 48) > 9u )
      goto LABEL_7;
    byte_804A060[(unsigned __int8)v4] += 1;
  }
  result = i;
  switch ( a2 )
  {
    case 0u:
      result = -1;
      break;
    case 1u:
    case 2u:
      result *= 2;
      break;
    default:
      return result;
  }
  return result;
LABEL_7:
  puts("bad digit");
  return -2;
}

//----- (08048C00) --------------------------------------------------------
_BYTE *__thiscall std::vector<int>::_M_insert_aux(void *this, int a2)
{
  _BYTE *v2; // ebx@1
  void *v3; // eax@1

  v2 = *((_BYTE **)this + 1);
  v3 = operator new(0x10u);
  if ( !v3 )
    std::__throw_bad_alloc();
  *(_DWORD *)v3 = a2;
  operator delete(v2);
  j_j___ZdlPv(v3);
  return (_BYTE *)v3 + sizeof(int);
}

//----- (08048D00) --------------------------------------------------------
int __cdecl main(int argc, const char **argv, const char **envp)
{
  int v3; // ST1C_4@1
  int v5; // [esp+18h] [ebp-18h]@1
  char v6[16]; // [esp+1Ch] [ebp-14h]@1
  __int64 v7; // [esp+2Ch] [ebp-4h]@1

  v7 = *MK_FP(__GS__, 20);
  scanf("%d", &v5);
  sub_8048A10(v5, (_DWORD *)v6);
  do
  {
    v3 = v5 % 10;
    v5 /= 10;
    printf("%c", v3 + 48);
  }
  while ( v5 > 0 );
  putchar(10);
  off_804A01C("done %s\n", argv[0]);
  return *MK_FP(__GS__, 20) ^ v7 ? __stack_chk_fail() : 0;
}
// 804A160: using guessed type int dword_804A160;
// ALL OK, 4 function(s) have been successfully decompiled
