int __cdecl main(int argc, const char **argv, const char **envp)
{
  return 0;
}
