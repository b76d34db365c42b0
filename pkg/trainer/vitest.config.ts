import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.spec.ts"],
    testTimeout: 180_000,
    hookTimeout: 60_000,
    // the engine subprocess tests are stateful; keep them off shared workers
    pool: "forks",
  },
});
