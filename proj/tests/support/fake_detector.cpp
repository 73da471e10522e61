// Stand-in detector process for adapter tests. Reads the image file named by
// the last argument and answers according to a marker in its bytes.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>
#include <thread>

int main(int argc, char** argv) {
  if (argc < 2) return 2;
  std::ifstream in(argv[argc - 1], std::ios::binary);
  if (!in) return 3;
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.find("CRASH") != std::string::npos) std::abort();
  if (bytes.find("HANG") != std::string::npos) {
    std::this_thread::sleep_for(std::chrono::seconds(30));
  }
  if (bytes.find("GARBAGE") != std::string::npos) {
    std::fputs("person detected!\n", stdout);
    return 0;
  }
  if (bytes.find("PERSON") != std::string::npos) {
    std::fputs("det person 0.91 0.1 0.2 0.3 0.4\ndet tie 0.6 0.2 0.5 0.1 0.2\nend\n", stdout);
  } else {
    std::fputs("det bottle 0.8 0 0 0.5 0.5\nend\n", stdout);
  }
  return 0;
}
