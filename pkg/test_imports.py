def test_import(module_name):
    try:
        __import__(module_name)
        print(f"✅ {module_name} 导入成功")
    except ImportError as e:
        print(f"❌ {module_name} 导入失败: {e}")

# 逐个测试导入
modules = [
    "numpy",
    "scipy.ndimage",
    "skimage.feature",
    "skimage.transform",
    "sklearn.neighbors",
    "pandas",
    "PIL",
    "matplotlib",
    "dotenv",
    "colorama"
]

for module in modules:
    test_import(module)
