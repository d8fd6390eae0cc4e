// Recomputes the score anchors and writes the env registry.
#include <iostream>

#include "aclql/envs.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : aclql::default_registry_path();
  aclql::EnvRegistry reg;
  reg[aclql::PointMass2D::kName] = aclql::compute_env_info(aclql::PointMass2D::kName);
  aclql::save_registry(reg, out);
  std::cout << aclql::serialize_registry(reg);
  return 0;
}
